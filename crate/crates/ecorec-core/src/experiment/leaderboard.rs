//! Markdown leaderboard over the result store, plus the published reference
//! table it can be compared against.
//!
//! Layout mirrors the reference: one section per dataset, base models as
//! columns, one row block per variant kind with AUC / MRR / N@5 / CO2E /
//! ApC, and a final row with the sustainability improvement of PREC over
//! PLM-NR. Best value per column and metric is bold, second best italic;
//! ties share the marking.

use std::collections::HashMap;
use std::path::Path;

use crate::green::{apc_improvement, compute_apc};
use crate::models::spec::{BaseModel, VariantKind, VariantSpec};
use crate::train::TrainConfig;
use crate::{Error, Result};

use super::config::AccountingMode;
use super::store::{read_store, RunResult};

const N_BASES: usize = 6;
const METRICS: [&str; 5] = ["AUC", "MRR", "N@5", "CO2E", "ApC"];
const CO2E_IDX: usize = 3;
const APC_IDX: usize = 4;

/// Published figures for one variant kind across the six base models,
/// in [`BaseModel::ALL`] order.
struct KindBlock {
    kind: VariantKind,
    auc: [f64; N_BASES],
    mrr: [f64; N_BASES],
    ndcg5: [f64; N_BASES],
    co2e: [f64; N_BASES],
    apc: [f64; N_BASES],
}

const SMALL_BLOCKS: [KindBlock; 5] = [
    KindBlock {
        kind: VariantKind::Id,
        auc: [50.13, 51.04, 54.84, 50.09, 53.92, 55.95],
        mrr: [23.01, 22.90, 26.53, 22.13, 25.18, 25.88],
        ndcg5: [22.35, 22.31, 26.34, 21.59, 24.43, 25.95],
        co2e: [19.0, 20.0, 28.0, 38.0, 60.0, 84.0],
        apc: [0.68, 5.20, 17.29, 0.24, 6.53, 7.08],
    },
    KindBlock {
        kind: VariantKind::Text,
        auc: [60.14, 61.27, 62.21, 60.51, 62.63, 62.90],
        mrr: [28.93, 29.64, 30.19, 28.59, 29.73, 30.06],
        ndcg5: [29.33, 30.28, 31.10, 29.09, 30.52, 30.65],
        co2e: [42.0, 58.0, 62.0, 53.0, 63.0, 90.0],
        apc: [24.14, 19.43, 19.69, 19.83, 20.05, 14.33],
    },
    KindBlock {
        kind: VariantKind::PlmNr,
        auc: [62.06, 63.64, 62.53, 64.40, 63.32, 63.26],
        mrr: [31.66, 31.74, 30.74, 32.21, 32.00, 31.83],
        ndcg5: [32.25, 32.72, 31.31, 33.34, 32.58, 32.40],
        co2e: [178.0, 202.0, 252.0, 505.0, 1752.0, 1839.0],
        apc: [6.78, 6.75, 4.97, 2.85, 0.76, 0.72],
    },
    KindBlock {
        kind: VariantKind::BertOleo,
        auc: [60.62, 61.09, 60.94, 60.81, 62.65, 62.40],
        mrr: [29.31, 29.26, 29.31, 29.04, 30.92, 30.75],
        ndcg5: [29.71, 29.60, 29.65, 29.38, 31.37, 32.44],
        co2e: [22.0, 23.0, 33.0, 38.0, 62.0, 86.0],
        apc: [48.27, 48.22, 33.15, 28.45, 20.40, 14.41],
    },
    KindBlock {
        kind: VariantKind::Prec,
        auc: [62.95, 62.16, 62.95, 62.43, 64.57, 63.12],
        mrr: [31.26, 31.00, 31.18, 30.42, 32.60, 31.28],
        ndcg5: [32.01, 31.79, 32.10, 30.94, 33.48, 32.01],
        co2e: [22.0, 23.0, 33.0, 38.0, 62.0, 86.0],
        apc: [58.86, 52.87, 39.24, 32.71, 23.50, 15.25],
    },
];

const LARGE_BLOCKS: [KindBlock; 5] = [
    KindBlock {
        kind: VariantKind::Id,
        auc: [52.98, 54.98, 57.59, 52.10, 57.41, 57.36],
        mrr: [24.52, 25.99, 27.41, 24.81, 26.76, 26.70],
        ndcg5: [24.12, 25.64, 27.05, 24.63, 26.90, 26.84],
        co2e: [294.0, 353.0, 471.0, 555.0, 926.0, 1294.0],
        apc: [1.01, 1.41, 1.61, 0.38, 0.80, 0.57],
    },
    KindBlock {
        kind: VariantKind::Text,
        auc: [63.03, 63.89, 64.12, 63.28, 63.88, 64.02],
        mrr: [30.40, 31.24, 31.77, 30.73, 31.65, 31.98],
        ndcg5: [31.82, 32.15, 32.64, 31.95, 32.40, 33.00],
        co2e: [648.0, 892.0, 1010.0, 1212.0, 972.0, 1386.0],
        apc: [2.01, 1.56, 1.40, 1.09, 1.43, 1.01],
    },
    KindBlock {
        kind: VariantKind::PlmNr,
        auc: [65.19, 65.73, 65.57, 66.03, 65.42, 65.31],
        mrr: [32.74, 33.18, 32.94, 33.40, 32.85, 32.68],
        ndcg5: [33.77, 34.26, 34.13, 34.70, 33.99, 33.70],
        co2e: [2527.0, 3032.0, 4043.0, 8086.0, 27036.0, 28329.0],
        apc: [0.60, 0.52, 0.39, 0.20, 0.06, 0.05],
    },
    KindBlock {
        kind: VariantKind::BertOleo,
        auc: [63.02, 63.62, 63.40, 62.94, 64.29, 63.75],
        mrr: [31.23, 31.59, 31.38, 30.56, 32.60, 31.58],
        ndcg5: [31.79, 32.30, 32.16, 31.83, 33.63, 32.43],
        co2e: [353.0, 404.0, 505.0, 640.0, 956.0, 956.0],
        apc: [3.69, 3.37, 2.65, 2.02, 1.49, 1.44],
    },
    KindBlock {
        kind: VariantKind::Prec,
        auc: [64.78, 64.88, 64.34, 65.33, 65.44, 64.53],
        mrr: [32.64, 32.94, 32.93, 33.29, 33.04, 32.72],
        ndcg5: [33.66, 34.00, 33.95, 34.35, 34.03, 33.58],
        co2e: [353.0, 404.0, 505.0, 640.0, 956.0, 956.0],
        apc: [4.19, 3.68, 2.84, 2.40, 1.61, 1.52],
    },
];

/// Published sustainability improvement of PREC over PLM-NR, in percent,
/// per base model. Kept for closure checks against the recomputed row.
pub const REFERENCE_IMPROVEMENT: [(&str, [f64; N_BASES]); 2] = [
    ("MIND-small", [768.0, 683.0, 690.0, 1048.0, 2992.0, 2018.0]),
    ("MIND-large", [598.0, 608.0, 628.0, 1100.0, 2583.0, 2940.0]),
];

/// The published result table as store rows: sixty cells carrying their
/// source-reported ApC, ready to persist or render next to fresh runs.
pub fn reference_table() -> Vec<RunResult> {
    let mut rows = Vec::with_capacity(60);
    for (dataset, blocks) in [("MIND-small", &SMALL_BLOCKS), ("MIND-large", &LARGE_BLOCKS)] {
        for block in blocks.iter() {
            for (i, base) in BaseModel::ALL.iter().enumerate() {
                let spec = VariantSpec::new(*base, block.kind);
                rows.push(RunResult {
                    config_hash: format!("reference-{dataset}-{}", spec.label()),
                    dataset: dataset.to_string(),
                    spec,
                    train: TrainConfig::default(),
                    seeds: vec![],
                    outcomes: vec![],
                    auc_mean: block.auc[i],
                    auc_std: 0.0,
                    mrr_mean: block.mrr[i],
                    mrr_std: 0.0,
                    ndcg5_mean: block.ndcg5[i],
                    ndcg5_std: 0.0,
                    val_auc_mean: block.auc[i],
                    co2e_train: block.co2e[i],
                    co2e_other: 0.0,
                    records: vec![],
                    encode_stats: None,
                    apc_source: Some(block.apc[i]),
                    finished_at: 0,
                });
            }
        }
    }
    rows
}

/// Format a published-style figure: integral values print bare, moderate
/// ones with two decimals, and desk-scale traces in scientific notation.
fn fmt_adaptive(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 || (v == v.round() && v.abs() >= 1.0) {
        format!("{v:.0}")
    } else if v.abs() >= 0.01 {
        format!("{v:.2}")
    } else {
        format!("{v:.2e}")
    }
}

/// A displayed value and the number it reads back as; ranking compares
/// what the reader sees, not hidden digits.
fn shown(v: f64, fixed2: bool) -> (String, f64) {
    let s = if fixed2 {
        format!("{v:.2}")
    } else {
        fmt_adaptive(v)
    };
    let q = s.parse::<f64>().unwrap_or(v);
    (s, q)
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    Best,
    Second,
}

fn apply_mark(s: &str, mark: Option<Mark>) -> String {
    match mark {
        Some(Mark::Best) => format!("**{s}**"),
        Some(Mark::Second) => format!("_{s}_"),
        None => s.to_string(),
    }
}

/// Pick one row per cell: best validation AUC, then latest, then hash.
fn choose<'a>(rows: &mut Vec<&'a RunResult>) -> &'a RunResult {
    rows.sort_by(|a, b| {
        b.val_auc_mean
            .partial_cmp(&a.val_auc_mean)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.finished_at.cmp(&a.finished_at))
            .then(a.config_hash.cmp(&b.config_hash))
    });
    rows[0]
}

struct Section<'a> {
    dataset: &'a str,
    /// Kinds present, in grid order.
    kinds: Vec<VariantKind>,
    /// (kind index, base index) -> chosen run.
    cells: HashMap<(usize, usize), &'a RunResult>,
}

fn split_sections<'a>(rows: &'a [RunResult]) -> Vec<Section<'a>> {
    let mut order: Vec<&str> = Vec::new();
    let mut grouped: HashMap<&str, Vec<&RunResult>> = HashMap::new();
    for r in rows {
        if !grouped.contains_key(r.dataset.as_str()) {
            order.push(&r.dataset);
        }
        grouped.entry(&r.dataset).or_default().push(r);
    }

    let mut sections = Vec::new();
    for dataset in order {
        let rows = &grouped[dataset];
        let mut by_cell: HashMap<(usize, usize), Vec<&RunResult>> = HashMap::new();
        for r in rows {
            let k = VariantKind::ALL
                .iter()
                .position(|&k| k == r.spec.variant_kind)
                .expect("kind is on the grid");
            let b = BaseModel::ALL
                .iter()
                .position(|&b| b == r.spec.base_model)
                .expect("base is on the grid");
            by_cell.entry((k, b)).or_default().push(r);
        }
        let cells: HashMap<(usize, usize), &RunResult> = by_cell
            .into_iter()
            .map(|(key, mut cands)| (key, choose(&mut cands)))
            .collect();
        let kinds: Vec<VariantKind> = VariantKind::ALL
            .iter()
            .enumerate()
            .filter(|(k, _)| (0..N_BASES).any(|b| cells.contains_key(&(*k, b))))
            .map(|(_, &kind)| kind)
            .collect();
        sections.push(Section {
            dataset,
            kinds,
            cells,
        });
    }
    sections
}

/// The five displayed figures of one cell. `None` inside a slot means the
/// figure is undefined there (ApC at zero grams).
fn cell_values(r: &RunResult, total: bool) -> [Option<(String, f64)>; 5] {
    let apc = match r.apc_source {
        Some(v) => Some(v),
        None => compute_apc(r.auc_mean, r.co2e(total)).ok(),
    };
    [
        Some(shown(r.auc_mean, true)),
        Some(shown(r.mrr_mean, true)),
        Some(shown(r.ndcg5_mean, true)),
        Some(shown(r.co2e(total), false)),
        apc.map(|v| shown(v, false)),
    ]
}

fn render_section(out: &mut String, section: &Section, mode: AccountingMode) {
    let total = mode == AccountingMode::Total;
    out.push_str(&format!("## {}\n\n", section.dataset));
    out.push_str(&format!(
        "CO2E in grams, {}. **Bold** is the best and _italic_ the second best \
         per column and metric; ties share the marking. Where several stored \
         runs fill one cell, the one with the best validation AUC is shown.\n\n",
        match mode {
            AccountingMode::TrainOnly => "recommender training only",
            AccountingMode::Total => "training plus pretraining, encoding, and evaluation",
        }
    ));

    out.push_str("| Variant | Metric |");
    for base in BaseModel::ALL {
        out.push_str(&format!(" {} |", base.as_str()));
    }
    out.push('\n');
    out.push_str(&format!("|---|---|{}", "---|".repeat(N_BASES)));
    out.push('\n');

    // values[k][b][m]
    let mut values: HashMap<(usize, usize), [Option<(String, f64)>; 5]> = HashMap::new();
    for (ki, &kind) in section.kinds.iter().enumerate() {
        let grid_k = VariantKind::ALL.iter().position(|&x| x == kind).unwrap();
        for b in 0..N_BASES {
            if let Some(r) = section.cells.get(&(grid_k, b)) {
                values.insert((ki, b), cell_values(r, total));
            }
        }
    }

    // Rank per base column and metric, across kinds.
    let mut marks: HashMap<(usize, usize, usize), Mark> = HashMap::new();
    for b in 0..N_BASES {
        for m in 0..METRICS.len() {
            let entries: Vec<(usize, f64)> = (0..section.kinds.len())
                .filter_map(|ki| {
                    values
                        .get(&(ki, b))
                        .and_then(|v| v[m].as_ref())
                        .map(|(_, q)| (ki, *q))
                })
                .collect();
            if entries.len() < 2 {
                continue;
            }
            let mut distinct: Vec<f64> = entries.iter().map(|(_, q)| *q).collect();
            distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
            distinct.dedup();
            if m != CO2E_IDX {
                distinct.reverse(); // higher is better everywhere but CO2E
            }
            let best = distinct[0];
            let n_best = entries.iter().filter(|(_, q)| *q == best).count();
            for (ki, q) in &entries {
                if *q == best {
                    marks.insert((*ki, b, m), Mark::Best);
                } else if n_best == 1 && distinct.len() > 1 && *q == distinct[1] {
                    marks.insert((*ki, b, m), Mark::Second);
                }
            }
        }
    }

    for (ki, kind) in section.kinds.iter().enumerate() {
        for (m, metric) in METRICS.iter().enumerate() {
            let label = if m == 0 { kind.as_str() } else { "" };
            out.push_str(&format!("| {label} | {metric} |"));
            for b in 0..N_BASES {
                let cell = values
                    .get(&(ki, b))
                    .and_then(|v| v[m].as_ref())
                    .map(|(s, _)| apply_mark(s, marks.get(&(ki, b, m)).copied()))
                    .unwrap_or_else(|| "-".to_string());
                out.push_str(&format!(" {cell} |"));
            }
            out.push('\n');
        }
    }

    // Sustainability improvement of PREC over PLM-NR, recomputed from the
    // ApC figures the table shows.
    let kind_row = |kind: VariantKind| {
        section
            .kinds
            .iter()
            .position(|&k| k == kind)
    };
    if let (Some(prec), Some(plm)) = (kind_row(VariantKind::Prec), kind_row(VariantKind::PlmNr)) {
        out.push_str("| ApC Imp. (%) | |");
        for b in 0..N_BASES {
            let pair = (
                values.get(&(prec, b)).and_then(|v| v[APC_IDX].as_ref()),
                values.get(&(plm, b)).and_then(|v| v[APC_IDX].as_ref()),
            );
            let cell = match pair {
                (Some((_, new)), Some((_, base))) => apc_improvement(*new, *base)
                    .map(|imp| format!("{:.0}%", imp.round()))
                    .unwrap_or_else(|_| "-".to_string()),
                _ => "-".to_string(),
            };
            out.push_str(&format!(" {cell} |"));
        }
        out.push('\n');
    }
    out.push('\n');
}

/// Render every dataset in the rows as its own table.
pub fn render_rows(rows: &[RunResult], mode: AccountingMode) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Config(
            "no results to rank; train something or import the reference table".into(),
        ));
    }
    let mut out = String::new();
    for section in split_sections(rows) {
        render_section(&mut out, &section, mode);
    }
    Ok(out.trim_end().to_string() + "\n")
}

/// Read the store and render it.
pub fn render_leaderboard(store_path: &Path, mode: AccountingMode) -> Result<String> {
    render_rows(&read_store(store_path)?, mode)
}
