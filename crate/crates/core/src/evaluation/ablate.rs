//! Ablation harness: trains and evaluates a matrix of configurations over a
//! shared seed schedule.
//!
//! Seed `i` of the schedule is `base_seed + i` in every cell, so two cells
//! with identical settings see identical data order, augmentation and
//! initialization. Cells whose training settings coincide share one trained
//! model (for example the rows of the localization table differ only at
//! test time).

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bench::{fps_benchmark, FpsReport, FPS_RUNS};
use super::metrics::EvalReport;
use crate::augmentation::AugmentConfig;
use crate::datagen::{Dataset, RunConfig};
use crate::error::{Error, Result};
use crate::localization::LocalizationMode;
use crate::nn::{ArchPreset, EpochStats, Network};
use crate::pipeline::{localize_dataset, perturb_centers, predict_poses, train_posenet, train_refiner, TrainedPoseNet};

/// Test-time centre noise used by the augmentation table, mm per axis.
pub const TABLE4_CENTER_NOISE: f64 = 5.0;
const FPS_WARMUP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AblationPreset {
    /// Augmentation subsets and the unaugmented-prior control.
    Table4,
    /// Localization modes.
    Table5,
    /// Architecture presets.
    Table6,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub label: String,
    pub config: RunConfig,
    pub localization: LocalizationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPlan {
    pub title: String,
    pub cells: Vec<AblationCell>,
    pub base_seed: u64,
    pub seeds: usize,
    /// Gaussian noise added to test-time crop centres, mm per axis.
    pub center_noise: f64,
    /// Wall-clock fps per cell; not deterministic, so off unless asked for.
    pub measure_fps: bool,
}

fn augmentation(r: bool, t: bool, s: bool) -> AugmentConfig {
    AugmentConfig { enable_rotation: r, enable_translation: t, enable_scale: s, ..AugmentConfig::default() }
}

impl AblationPreset {
    pub fn title(self) -> &'static str {
        match self {
            AblationPreset::Table4 => "Effects of the training procedure",
            AblationPreset::Table5 => "Impact of hand localization accuracy",
            AblationPreset::Table6 => "Impact of network architecture",
        }
    }

    /// Cells of the preset, derived from `base` (which supplies epochs,
    /// scale, optimizer and so on).
    pub fn plan(self, base: &RunConfig, seeds: usize) -> AblationPlan {
        let cell = |label: &str, config: RunConfig, localization| AblationCell { label: label.into(), config, localization };
        let with_aug = |a: AugmentConfig, prior_aug: bool| RunConfig { augmentation: a, prior_augmentation: prior_aug, ..base.clone() };
        let all = augmentation(true, true, true);
        let (cells, center_noise) = match self {
            AblationPreset::Table4 => {
                let gt = LocalizationMode::GroundTruth;
                (
                    vec![
                        cell("none", with_aug(AugmentConfig::none(), true), gt),
                        cell("T", with_aug(augmentation(false, true, false), true), gt),
                        cell("R", with_aug(augmentation(true, false, false), true), gt),
                        cell("S", with_aug(augmentation(false, false, true), true), gt),
                        cell("R+T+S", with_aug(all, true), gt),
                        cell("R+T+S & no prior aug.", with_aug(all, false), gt),
                    ],
                    TABLE4_CENTER_NOISE,
                )
            }
            AblationPreset::Table5 => (
                vec![
                    cell("CoM", with_aug(all, true), LocalizationMode::CenterOfMass),
                    cell("Refined CoM", with_aug(all, true), LocalizationMode::Refined),
                    cell("Ground truth", with_aug(all, true), LocalizationMode::GroundTruth),
                ],
                0.0,
            ),
            AblationPreset::Table6 => (
                [ArchPreset::Original, ArchPreset::OriginalMoreFilters, ArchPreset::ResNet]
                    .into_iter()
                    .map(|a| {
                        cell(a.label(), RunConfig { architecture: a, ..with_aug(all, true) }, LocalizationMode::Refined)
                    })
                    .collect(),
                0.0,
            ),
        };
        AblationPlan {
            title: self.title().into(),
            cells,
            base_seed: base.seed,
            seeds,
            center_noise,
            measure_fps: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub report: Option<EvalReport>,
    /// Mean distance of the crop centres used to the annotated reference joint, mm.
    pub localization_error_mm: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub localization: LocalizationMode,
    pub fingerprint: String,
    pub outcomes: Vec<SeedOutcome>,
    /// Mean and sample std of the average 3D error over successful seeds.
    pub mean_error_mm: Option<f64>,
    pub std_error_mm: Option<f64>,
    pub mean_localization_error_mm: Option<f64>,
    pub fps: Option<FpsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub title: String,
    pub seeds: Vec<u64>,
    pub center_noise: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, label: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Fixed-width text rendering for terminals.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} (seeds {:?}, centre noise {} mm)", self.title, self.seeds, self.center_noise);
        let _ = writeln!(s, "{:<28} {:>12} {:>9} {:>12} {:>8}", "row", "error mm", "std", "loc err mm", "fps");
        let opt = |v: Option<f64>, p: usize| v.map_or_else(|| "-".to_string(), |x| format!("{x:.p$}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<28} {:>12} {:>9} {:>12} {:>8}",
                r.label,
                opt(r.mean_error_mm, 2),
                opt(r.std_error_mm, 2),
                opt(r.mean_localization_error_mm, 2),
                opt(r.fps.as_ref().map(|f| f.mean), 1)
            );
            for o in &r.outcomes {
                if let Some(f) = &o.failure {
                    let _ = writeln!(s, "  seed {} failed: {f}", o.seed);
                }
            }
        }
        s
    }

    /// `row,seed,average_error_mm,localization_error_mm,failure` lines, one per cell and seed.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("# ");
        s.push_str(&self.title);
        s.push_str("\nrow,seed,average_error_mm,localization_error_mm,failure\n");
        for r in &self.rows {
            for o in &r.outcomes {
                let err = o.report.as_ref().map(|r| r.average_error_mm.to_string()).unwrap_or_default();
                let loc = o.localization_error_mm.map(|v| v.to_string()).unwrap_or_default();
                let fail = o.failure.as_deref().unwrap_or("").replace([',', '\n'], " ");
                let _ = writeln!(s, "{},{},{err},{loc},{fail}", r.label, o.seed);
            }
        }
        s
    }
}

/// What [`ablate`] reports while it runs.
#[derive(Debug)]
pub enum AblationEvent<'a> {
    Training { row: &'a str, seed: u64, model: &'static str },
    Epoch { row: &'a str, seed: u64, model: &'static str, stats: &'a EpochStats },
    Cell { row: &'a str, seed: u64, outcome: &'a SeedOutcome },
}

/// Settings that determine the refiner, serialized as its cache key.
fn refiner_key(cfg: &RunConfig) -> String {
    serde_json::to_string(&(
        cfg.seed,
        cfg.scale,
        cfg.augmentation,
        cfg.cube_size,
        cfg.segment_extent,
        cfg.epochs,
        cfg.batch_size,
        cfg.optimizer,
    ))
    .expect("config serializes")
}

fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let s = if v.len() > 1 { (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt() } else { 0.0 };
    (Some(m), Some(s))
}

pub fn ablate(
    plan: &AblationPlan,
    train: &Dataset,
    test: &Dataset,
    progress: &mut dyn FnMut(AblationEvent<'_>),
) -> Result<AblationTable> {
    if plan.cells.is_empty() || plan.seeds == 0 {
        return Err(Error::Config("ablation needs at least one cell and one seed".into()));
    }
    if test.is_empty() {
        return Err(Error::InsufficientData("empty test set".into()));
    }
    for c in &plan.cells {
        c.config.validate()?;
    }
    let seeds: Vec<u64> = (0..plan.seeds as u64).map(|i| plan.base_seed.wrapping_add(i)).collect();
    let mut posenets: HashMap<String, std::result::Result<TrainedPoseNet, String>> = HashMap::new();
    let mut refiners: HashMap<String, std::result::Result<Network<f32>, String>> = HashMap::new();
    let mut rows = Vec::with_capacity(plan.cells.len());
    for cell in &plan.cells {
        let label = cell.label.as_str();
        let mut outcomes = Vec::with_capacity(seeds.len());
        let mut fps = None;
        for &seed in &seeds {
            let cfg = RunConfig { seed, ..cell.config.clone() };
            let key = cfg.fingerprint();
            if !posenets.contains_key(&key) {
                progress(AblationEvent::Training { row: label, seed, model: "posenet" });
                let trained = train_posenet(train, &cfg, &mut |s| {
                    progress(AblationEvent::Epoch { row: label, seed, model: "posenet", stats: s })
                });
                posenets.insert(key.clone(), trained.map_err(|e| e.to_string()));
            }
            let rkey = refiner_key(&cfg);
            if cell.localization == LocalizationMode::Refined && !refiners.contains_key(&rkey) {
                progress(AblationEvent::Training { row: label, seed, model: "refinenet" });
                let trained = train_refiner(train, &cfg, &mut |s| {
                    progress(AblationEvent::Epoch { row: label, seed, model: "refinenet", stats: s })
                });
                refiners.insert(rkey.clone(), trained.map(|(n, _)| n).map_err(|e| e.to_string()));
            }
            let refiner = match refiners.get(&rkey) {
                Some(Ok(n)) => Some(n),
                Some(Err(e)) if cell.localization == LocalizationMode::Refined => {
                    let outcome = failed(seed, format!("refiner training failed: {e}"));
                    progress(AblationEvent::Cell { row: label, seed, outcome: &outcome });
                    outcomes.push(outcome);
                    continue;
                }
                _ => None,
            };
            let outcome = match &posenets[&key] {
                Err(e) => failed(seed, format!("training failed: {e}")),
                Ok(model) => match evaluate_cell(model, refiner, &cfg, cell.localization, plan.center_noise, test) {
                    Ok((report, loc)) => {
                        if plan.measure_fps && fps.is_none() {
                            if let Some(r) = refiner {
                                fps = fps_benchmark(
                                    &model.net,
                                    r,
                                    &test.frames,
                                    &test.intrinsics,
                                    cfg.cube_size,
                                    cfg.segment_extent,
                                    FPS_WARMUP.min(test.len() - 1),
                                    FPS_RUNS,
                                )
                                .ok();
                            }
                        }
                        SeedOutcome { seed, report: Some(report), localization_error_mm: Some(loc), failure: None }
                    }
                    Err(e) => failed(seed, format!("evaluation failed: {e}")),
                },
            };
            progress(AblationEvent::Cell { row: label, seed, outcome: &outcome });
            outcomes.push(outcome);
        }
        let errors: Vec<f64> = outcomes.iter().filter_map(|o| o.report.as_ref().map(|r| r.average_error_mm)).collect();
        let locs: Vec<f64> = outcomes.iter().filter_map(|o| o.localization_error_mm).collect();
        let (mean_error_mm, std_error_mm) = mean_std(&errors);
        rows.push(AblationRow {
            label: cell.label.clone(),
            localization: cell.localization,
            fingerprint: cell.config.fingerprint(),
            outcomes,
            mean_error_mm,
            std_error_mm,
            mean_localization_error_mm: mean_std(&locs).0,
            fps,
        });
    }
    Ok(AblationTable { title: plan.title.clone(), seeds, center_noise: plan.center_noise, rows })
}

fn failed(seed: u64, msg: String) -> SeedOutcome {
    SeedOutcome { seed, report: None, localization_error_mm: None, failure: Some(msg) }
}

fn evaluate_cell(
    model: &TrainedPoseNet,
    refiner: Option<&Network<f32>>,
    cfg: &RunConfig,
    mode: LocalizationMode,
    center_noise: f64,
    test: &Dataset,
) -> Result<(EvalReport, f64)> {
    let centers = localize_dataset(test, mode, refiner, cfg.cube_size, cfg.segment_extent)?;
    let centers = perturb_centers(&centers, center_noise, cfg.seed)?;
    let loc = centers.iter().zip(&test.annotations).map(|(c, p)| c.distance(p.reference())).sum::<f64>() / test.len() as f64;
    let preds = predict_poses(&model.net, &test.frames, &centers, &test.intrinsics, cfg.cube_size)?;
    let report = EvalReport::compute(&preds, &test.annotations, &cfg.evaluation.thresholds()?, &cfg.fingerprint())?;
    Ok((report, loc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, SyntheticSceneConfig};
    use crate::nn::NetScale;

    fn tiny() -> RunConfig {
        RunConfig { epochs: 1, batch_size: 8, prior_samples: 500, architecture: ArchPreset::Original, scale: NetScale::Desk, ..Default::default() }
    }

    #[test]
    fn preset_row_structures() {
        let t4 = AblationPreset::Table4.plan(&tiny(), 3);
        let labels: Vec<&str> = t4.cells.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["none", "T", "R", "S", "R+T+S", "R+T+S & no prior aug."]);
        assert!(!t4.cells[5].config.prior_augmentation && t4.cells[4].config.prior_augmentation);
        assert_eq!(t4.center_noise, TABLE4_CENTER_NOISE);
        let t5 = AblationPreset::Table5.plan(&tiny(), 3);
        let modes: Vec<_> = t5.cells.iter().map(|c| c.localization).collect();
        assert_eq!(modes, [LocalizationMode::CenterOfMass, LocalizationMode::Refined, LocalizationMode::GroundTruth]);
        let t6 = AblationPreset::Table6.plan(&tiny(), 3);
        assert_eq!(t6.cells.len(), 3);
        assert!(t6.cells.iter().all(|c| c.localization == LocalizationMode::Refined));
    }

    #[test]
    fn identical_cells_give_identical_reports_and_failures_are_recorded() {
        let data = generate_dataset(24, 3, &SyntheticSceneConfig { seed: 2, ..Default::default() }).unwrap();
        let (train, test) = data.split_subjects(&[2]);
        let cell = AblationCell { label: "a".into(), config: tiny(), localization: LocalizationMode::GroundTruth };
        let bad = AblationCell {
            label: "bad".into(),
            config: RunConfig { prior_dim: 500, ..tiny() },
            localization: LocalizationMode::GroundTruth,
        };
        let plan = AblationPlan {
            title: "t".into(),
            cells: vec![cell.clone(), AblationCell { label: "b".into(), ..cell }, bad],
            base_seed: 4,
            seeds: 1,
            center_noise: 2.0,
            measure_fps: false,
        };
        let table = ablate(&plan, &train, &test, &mut |_| {}).unwrap();
        assert_eq!(table.rows[0].outcomes[0].report, table.rows[1].outcomes[0].report);
        assert!(table.rows[0].mean_error_mm.is_some());
        assert!(table.rows[2].outcomes[0].failure.is_some());
        assert!(table.rows[2].mean_error_mm.is_none());
        assert!(table.render().contains("failed"));
    }
}
