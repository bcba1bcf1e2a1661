//! Raw versus decorrelated design diagnostics.

use anyhow::Result;
use deco_core::datagen::Dataset;
use deco_core::deco::{decorrelate_stage, DecoConfig, DecorrelationMode};
use deco_core::eval::{design_diagnostics, DiagnosticsReport, PairSampling};
use deco_core::linalg::{mean, Matrix};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagOutput {
    pub mode: DecorrelationMode,
    pub r1: f64,
    pub raw: DiagnosticsReport,
    pub decorrelated: DiagnosticsReport,
}

/// Runs only the decorrelation stage and measures the standardized design
/// before and after it. When the true coefficients are known, the noise
/// correlation is reported too.
pub fn diagnose(data: &Dataset, config: &DecoConfig, sampling: PairSampling) -> Result<DiagOutput> {
    let stage = decorrelate_stage(data, config)?;

    let mut columns: Vec<Option<Vec<f64>>> = vec![None; data.p()];
    for (group, (block, _)) in stage.partition.groups().iter().zip(&stage.blocks) {
        for (k, &j) in group.iter().enumerate() {
            columns[j] = Some(block.col(k).to_vec());
        }
    }
    let columns: Vec<Vec<f64>> = columns.into_iter().map(|c| c.expect("partition covers")).collect();
    let x_tilde = Matrix::from_columns(data.n(), &columns)?;

    let noise = data.noise().map(|mut e| {
        let m = mean(&e);
        e.iter_mut().for_each(|v| *v -= m);
        e
    });
    let noise_tilde = match (&noise, &stage.transform) {
        (Some(e), Some(t)) => Some(t.matvec(e)?),
        (Some(e), None) => Some(e.clone()),
        (None, _) => None,
    };

    Ok(DiagOutput {
        mode: config.mode,
        r1: config.effective_r1(),
        raw: design_diagnostics(&stage.standardized.x, noise.as_deref(), sampling)?,
        decorrelated: design_diagnostics(&x_tilde, noise_tilde.as_deref(), sampling)?,
    })
}
