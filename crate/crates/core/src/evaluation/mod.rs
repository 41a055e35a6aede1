//! Accuracy metrics, report files, the ablation harness and the fps benchmark.

pub mod ablate;
pub mod bench;
pub mod metrics;
pub mod report_io;

pub use ablate::{ablate, AblationCell, AblationEvent, AblationPlan, AblationPreset, AblationRow, AblationTable, SeedOutcome, TABLE4_CENTER_NOISE};
pub use bench::{fps_benchmark, FpsReport, FPS_RUNS};
pub use metrics::{average_3d_error, check_thresholds, fraction_curve, joint_errors, per_joint_error, EvalReport, MetricCurve, Variant};
pub use report_io::{encode_report, export_report, import_report, report_from_csv, report_to_csv, ReportFormat, CSV_COLUMNS};
