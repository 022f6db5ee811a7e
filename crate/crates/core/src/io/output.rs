//! Particle (JSON Lines) and marginal (CSV) report formats.

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::error::Result;
use crate::ext::ExtReal;
use crate::sampler::{MarginalDensity, ParticleSet};
use crate::se3::Pose;

/// One particle per line. `loglik` is null for infeasible particles and
/// `weight` is null when the set is unweighted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleLine {
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub loglik: Option<f64>,
    pub weight: Option<f64>,
}

pub fn particle_jsonl(p: &ParticleSet) -> String {
    let mut out = String::new();
    for (i, (pose, ll)) in p.iter().enumerate() {
        let [qw, qx, qy, qz] = pose.quaternion();
        let t = pose.translation();
        let line = ParticleLine {
            qw,
            qx,
            qy,
            qz,
            tx: t.x,
            ty: t.y,
            tz: t.z,
            loglik: ll.finite(),
            weight: p.weights().map(|w| w[i]),
        };
        out.push_str(&serde_json::to_string(&line).expect("plain numbers serialize"));
        out.push('\n');
    }
    out
}

pub fn read_particles_jsonl(text: &str) -> Result<ParticleSet> {
    let mut poses = Vec::new();
    let mut lls = Vec::new();
    let mut weights = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: ParticleLine = serde_json::from_str(line)
            .map_err(|e| FormatError::Malformed(format!("particle line {}: {e}", n + 1)))?;
        poses.push(Pose::new(
            [rec.qw, rec.qx, rec.qy, rec.qz],
            nalgebra::Vector3::new(rec.tx, rec.ty, rec.tz),
        )?);
        lls.push(rec.loglik.map_or(ExtReal::NegInf, ExtReal::Finite));
        weights.push(rec.weight);
    }
    let set = ParticleSet::new(poses, lls)?;
    if weights.iter().all(Option::is_some) {
        set.with_weights(weights.into_iter().flatten().collect())
    } else {
        Ok(set)
    }
}

pub fn marginal_csv(m: &MarginalDensity) -> String {
    let mut out = String::from("value,density\n");
    for (x, d) in m.grid.iter().zip(&m.density) {
        out.push_str(&format!("{x},{d}\n"));
    }
    out
}

pub fn read_marginal_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("value,density") {
        return Err(FormatError::Malformed("missing value,density header".into()).into());
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| FormatError::Malformed(format!("bad marginal row {l:?}")).into())
            };
            let row = (parse(it.next())?, parse(it.next())?);
            if it.next().is_some() {
                return Err(FormatError::Malformed(format!("bad marginal row {l:?}")).into());
            }
            Ok(row)
        })
        .collect()
}
