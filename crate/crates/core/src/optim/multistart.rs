//! Seeded multi-start runs executed on a bounded thread pool.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{minimize, Objective, OptimConfig, OptimReport};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct StartRun {
    pub index: usize,
    /// Seed of the start point's generator (`seed + index`).
    pub seed: u64,
    pub x0: Vec<f64>,
    /// `Err` holds the message of a run that failed outright.
    pub outcome: std::result::Result<OptimReport, String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiStartReport {
    pub runs: Vec<StartRun>,
    /// Index into `runs` of the lowest final loss.
    pub best: usize,
}

impl MultiStartReport {
    pub fn best_run(&self) -> &StartRun {
        &self.runs[self.best]
    }

    pub fn best_report(&self) -> &OptimReport {
        self.runs[self.best].outcome.as_ref().expect("best run succeeded")
    }
}

/// Runs `starts` independent minimizations from points drawn uniformly in the
/// box, start `k` using `ChaCha8Rng::seed_from_u64(seed + k)`. At most
/// `threads` runs execute at once (all cores when `None`).
pub fn multistart<O>(
    obj: &O,
    cfg: &OptimConfig,
    starts: usize,
    seed: u64,
    threads: Option<usize>,
) -> Result<MultiStartReport>
where
    O: Objective + ?Sized,
{
    if starts == 0 {
        return Err(Error::config("optim.starts", "must be >= 1"));
    }
    cfg.validate()?;
    let inputs: Vec<(usize, u64, Vec<f64>)> = (0..starts)
        .map(|k| {
            let s = seed.wrapping_add(k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (k, s, cfg.bounds.sample(&mut rng))
        })
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Numerical(format!("could not start worker threads: {e}")))?;
    let runs: Vec<StartRun> = pool.install(|| {
        inputs
            .into_par_iter()
            .map(|(index, seed, x0)| {
                let outcome = minimize(&x0, obj, cfg, |_| {});
                if let Err(e) = &outcome {
                    if e.is_config() {
                        return Err(e.to_string());
                    }
                }
                Ok(StartRun { index, seed, x0, outcome: outcome.map_err(|e| e.to_string()) })
            })
            .collect::<std::result::Result<Vec<_>, String>>()
    })
    .map_err(Error::Numerical)?;
    let best = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.outcome.as_ref().ok().map(|rep| (i, rep.best_loss)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .ok_or_else(|| {
            let first = runs[0].outcome.as_ref().err().cloned().unwrap_or_default();
            Error::Numerical(format!("every start failed; first error: {first}"))
        })?;
    Ok(MultiStartReport { runs, best })
}
