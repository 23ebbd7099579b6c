//! The augmentation × channel-multiplier ablation grid.

use super::metrics::MetricsReport;
use super::trainer::{train, EpochRecord, PreparedData};
use super::TrainConfig;
use crate::error::Result;
use crate::network::{ArchitectureSpec, Augmentation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationRow {
    pub augmentation: Augmentation,
    pub mp_planes: usize,
    pub t: usize,
}

impl AblationRow {
    pub fn label(&self) -> String {
        match self.augmentation {
            Augmentation::None | Augmentation::Lle => format!("{} t={}", self.augmentation, self.t),
            _ => format!(
                "{} planes={} t={}",
                self.augmentation, self.mp_planes, self.t
            ),
        }
    }
}

/// Baseline, LLE, single-plane MP, three-plane MP at t=2 and t=4, and the
/// joint LLE+MP model at t=4.
pub fn ablation_grid() -> [AblationRow; 6] {
    let row = |augmentation, mp_planes, t| AblationRow {
        augmentation,
        mp_planes,
        t,
    };
    [
        row(Augmentation::None, 3, 1),
        row(Augmentation::Lle, 3, 1),
        row(Augmentation::Mp, 1, 1),
        row(Augmentation::Mp, 3, 2),
        row(Augmentation::Mp, 3, 4),
        row(Augmentation::LleMp, 3, 4),
    ]
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub row: AblationRow,
    pub parameters: usize,
    pub best_epoch: usize,
    pub best: MetricsReport,
    pub last: MetricsReport,
    pub log: Vec<EpochRecord>,
}

/// Trains every grid row with the same data and seed. `data` must carry LLE
/// features.
pub fn run_ablation(
    data: &PreparedData,
    config: &TrainConfig,
    spec: &ArchitectureSpec,
    on_row: &mut dyn FnMut(&AblationResult),
) -> Result<Vec<AblationResult>> {
    let mut results = Vec::new();
    for row in ablation_grid() {
        let row_spec = ArchitectureSpec {
            mp_planes: row.mp_planes,
            ..spec.clone()
        };
        let row_config = TrainConfig {
            t: row.t,
            ..config.clone()
        };
        let mut outcome = train(data, &row_config, &row_spec, row.augmentation, &mut |_| {})?;
        let result = AblationResult {
            row,
            parameters: outcome.model.parameter_count(),
            best_epoch: outcome.best_epoch,
            best: outcome.best_metrics,
            last: outcome.final_metrics,
            log: outcome.log,
        };
        on_row(&result);
        results.push(result);
    }
    Ok(results)
}

pub fn ablation_csv(results: &[AblationResult]) -> String {
    let mut out = String::from(
        "row,augmentation,mp_planes,t,parameters,best_epoch,best_oa,best_ma,final_oa,final_ma\n",
    );
    for (i, r) in results.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            i + 1,
            r.row.augmentation,
            r.row.mp_planes,
            r.row.t,
            r.parameters,
            r.best_epoch,
            r.best.oa,
            r.best.ma,
            r.last.oa,
            r.last.ma
        ));
    }
    out
}
