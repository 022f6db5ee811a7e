//! Benchmark fixtures.

use posefield::{generate, StructuredPointCloud, SynthInstance, SynthSpec};

/// The unique-descriptor scene from the presets.
pub fn unique() -> SynthInstance {
    generate(&SynthSpec::unique()).expect("preset generates")
}

/// The occluded-handle mug from the presets.
pub fn mug() -> SynthInstance {
    generate(&SynthSpec::mug()).expect("preset generates")
}

/// The first `n` points of the instance's object (cycled when it has fewer).
pub fn object_prefix(inst: &SynthInstance, n: usize) -> StructuredPointCloud {
    let len = inst.object.len();
    let idx: Vec<usize> = (0..n).map(|i| i % len).collect();
    inst.object.select(&idx).expect("indices in range")
}
