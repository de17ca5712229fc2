//! Seeded input paths for the deterministic experiments.

use pathkac::path_core::GridPath;
use pathkac::rng::StreamRng;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    RandomWalk,
    Sine,
    Constant,
}

impl PathKind {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "random_walk" => Ok(PathKind::RandomWalk),
            "sine" => Ok(PathKind::Sine),
            "constant" => Ok(PathKind::Constant),
            other => Err(CliError::Usage(format!(
                "unknown path_kind '{other}' (expected random_walk | sine | constant)"
            ))),
        }
    }
}

/// Path number `index` of the family `kind`; `index` selects an independent
/// random stream.
pub fn generate(
    kind: PathKind,
    dim: usize,
    dt: f64,
    horizon: f64,
    seed: u64,
    index: u64,
) -> Result<GridPath, CliError> {
    let steps = (horizon / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - horizon).abs() > 1e-9 * horizon {
        return Err(CliError::Usage(format!(
            "T = {horizon} is not a positive multiple of dt = {dt}"
        )));
    }
    let mut rng = StreamRng::new(seed, index);
    let path = match kind {
        PathKind::Constant => GridPath::constant(0.0, dt, steps, &vec![1.0; dim]),
        PathKind::RandomWalk => {
            let mut data = Vec::with_capacity((steps + 1) * dim);
            let start: Vec<f64> = (0..dim).map(|_| 0.5 * rng.normal()).collect();
            data.extend(&start);
            let scale = dt.sqrt();
            for k in 0..steps {
                for j in 0..dim {
                    let prev = data[k * dim + j];
                    data.push(prev + scale * rng.normal());
                }
            }
            GridPath::new(0.0, dt, dim, data)
        }
        PathKind::Sine => {
            let params: Vec<(f64, f64, f64)> = (0..dim)
                .map(|_| (rng.normal(), 1.0 + 5.0 * rng.uniform(), 6.0 * rng.uniform()))
                .collect();
            GridPath::sample(0.0, dt, steps, dim, |t, out| {
                for (o, (a, w, phase)) in out.iter_mut().zip(&params) {
                    *o = a + (w * t + phase).sin();
                }
            })
        }
    };
    path.map_err(CliError::from)
}
