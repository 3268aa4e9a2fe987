//! Width and ansatz sweeps: one train + probe run per variant.

use std::fmt::Write as _;

use super::config::{set_width, RunConfig};
use super::probe::cmd_probe;
use super::train::cmd_train_ssl;
use crate::error::{Error, Result};
use crate::qnn::AnsatzKind;

pub const ABLATION_FILE: &str = "ablation.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sweep {
    Widths(Vec<usize>),
    /// Layers are re-chosen per ansatz to match the base configuration's
    /// parameter count when possible.
    Ansatz(Vec<AnsatzKind>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub label: String,
    pub config: RunConfig,
    pub representation_params: usize,
    pub final_loss: Option<f64>,
    pub final_mean_hs: Option<f64>,
    pub probe_accuracy: f64,
}

/// Smallest layer count giving `kind` exactly `target` parameters.
pub fn layers_matching(kind: AnsatzKind, width: usize, target: usize) -> Option<usize> {
    (1..=256).find(|&l| kind.param_count(width, l) == target)
}

pub fn variants(base: &RunConfig, sweep: &Sweep) -> Result<Vec<(String, RunConfig)>> {
    let mut out = Vec::new();
    match sweep {
        Sweep::Widths(ws) => {
            if ws.is_empty() {
                return Err(Error::InvalidArgument("empty width sweep".into()));
            }
            for &w in ws {
                let mut c = base.clone();
                set_width(&mut c, w);
                c.out = base.out.join(format!("width_{w}"));
                c.validate()?;
                out.push((format!("width_{w}"), c));
            }
        }
        Sweep::Ansatz(kinds) => {
            if kinds.is_empty() {
                return Err(Error::InvalidArgument("empty ansatz sweep".into()));
            }
            let target = base.encoder.qnn().param_count();
            for &k in kinds {
                let mut c = base.clone();
                c.encoder.ansatz = k;
                if let Some(l) = layers_matching(k, c.encoder.width, target) {
                    c.encoder.qnn_layers = l;
                }
                c.out = base.out.join(format!("ansatz_{}", k.name()));
                c.validate()?;
                out.push((format!("ansatz_{}", k.name()), c));
            }
        }
    }
    Ok(out)
}

pub fn format_ablation(results: &[VariantResult]) -> String {
    let na = |v: Option<f64>| v.map_or("NA".into(), |x| format!("{x:?}"));
    let mut s = String::from(
        "variant\trepresentation\tansatz\twidth\tlayers\tparams\tfinal_loss\tfinal_mean_hs\tprobe_accuracy\n",
    );
    for r in results {
        let e = &r.config.encoder;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:?}",
            r.label,
            e.representation.name(),
            e.ansatz.name(),
            e.width,
            e.qnn_layers,
            r.representation_params,
            na(r.final_loss),
            na(r.final_mean_hs),
            r.probe_accuracy
        );
    }
    s
}

/// Runs every variant and writes `ablation.tsv` under `base.out`.
pub fn cmd_ablate(base: &RunConfig, sweep: &Sweep) -> Result<Vec<VariantResult>> {
    let mut results = Vec::new();
    for (label, config) in variants(base, sweep)? {
        let trained = cmd_train_ssl(&config, None, &mut |_| {})?;
        let probe = cmd_probe(&config, std::slice::from_ref(&trained.final_checkpoint))?;
        let last = trained.records.last();
        results.push(VariantResult {
            label,
            representation_params: config.encoder.representation_param_count(),
            final_loss: last.and_then(|r| r.loss),
            final_mean_hs: last.and_then(|r| r.mean_hs),
            probe_accuracy: probe[0].test_accuracy,
            config,
        });
    }
    let path = base.out.join(ABLATION_FILE);
    std::fs::create_dir_all(&base.out).map_err(|e| Error::io(&base.out, e))?;
    std::fs::write(&path, format_ablation(&results)).map_err(|e| Error::io(&path, e))?;
    Ok(results)
}
