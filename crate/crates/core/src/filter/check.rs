use std::collections::HashSet;
use std::sync::Arc;

use serde_json::{json, Value};

use super::{MeasIndex, PMBMPosterior};

/// Worst-case deviations of the structural invariants of a posterior.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InvariantReport {
    /// `|Σ w − 1|` over global hypotheses.
    pub weight_sum_error: f64,
    /// Largest `|Σ β − 1|` over densities.
    pub beta_sum_error: f64,
    /// Existence probabilities outside `[0, 1]`.
    pub bad_existence: usize,
    /// Human-readable exclusivity violations.
    pub exclusivity: Vec<String>,
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
}

impl InvariantReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.weight_sum_error <= tol
            && self.beta_sum_error <= tol
            && self.bad_existence == 0
            && self.exclusivity.is_empty()
            && self.max_asymmetry <= tol
            && self.min_eigenvalue >= -tol
    }
}

pub fn check_invariants(post: &PMBMPosterior) -> InvariantReport {
    let mut report = InvariantReport {
        min_eigenvalue: f64::INFINITY,
        ..Default::default()
    };
    let total: f64 = post.globals.iter().map(|g| g.weight()).sum();
    report.weight_sum_error = (total - 1.0).abs();

    let mut seen = HashSet::new();
    let mut health = |c: &Arc<crate::gauss::GaussianBranchComponent>| {
        if seen.insert(Arc::as_ptr(c)) {
            let (asym, eig) = c.covariance_health();
            report.max_asymmetry = report.max_asymmetry.max(asym);
            report.min_eigenvalue = report.min_eigenvalue.min(eig);
        }
    };
    let mut beta_err: f64 = 0.0;
    let mut bad_existence = 0;
    for slot in post.trees.iter().flat_map(|t| &t.slots) {
        for h in &slot.hypotheses {
            if !(0.0..=1.0).contains(&h.existence) {
                bad_existence += 1;
            }
            if let Some(d) = &h.density {
                beta_err = beta_err.max((d.beta_sum() - 1.0).abs());
                for c in &d.components {
                    health(&c.component);
                }
            }
        }
    }
    for p in &post.ppp {
        let (asym, eig) = p.component.covariance_health();
        report.max_asymmetry = report.max_asymmetry.max(asym);
        report.min_eigenvalue = report.min_eigenvalue.min(eig);
    }
    report.beta_sum_error = beta_err;
    report.bad_existence = bad_existence;

    let mut expected: Vec<MeasIndex> = Vec::new();
    for (k, &m) in post.measurement_counts.iter().enumerate() {
        expected.extend((0..m).map(|m| (k as u32 + 1, m)));
    }
    for (gi, g) in post.globals.iter().enumerate() {
        let mut got = g.retired.clone();
        for (i, sel) in g.selection.iter().enumerate() {
            for (j, s) in sel.iter().enumerate() {
                let Some(h) = s else { continue };
                let a = &post.trees[i].slots[j].hypotheses[*h as usize].associations;
                let steps: HashSet<u32> = a.iter().map(|x| x.0).collect();
                if steps.len() != a.len() {
                    report
                        .exclusivity
                        .push(format!("global {gi}: tree {i} slot {j} has two measurements in one step"));
                }
                got.extend_from_slice(a);
            }
        }
        got.sort_unstable();
        if got != expected {
            report.exclusivity.push(format!(
                "global {gi}: {} measurement indices accounted for, expected {}",
                got.len(),
                expected.len()
            ));
        }
    }
    if report.min_eigenvalue == f64::INFINITY {
        report.min_eigenvalue = 0.0;
    }
    report
}

/// Debug dump of the hypothesis structure (no state densities).
pub fn snapshot_json(post: &PMBMPosterior) -> String {
    let trees: Vec<Value> = post
        .trees
        .iter()
        .map(|t| {
            json!({
                "start_time": t.start_time,
                "slots": t.slots.iter().map(|s| json!({
                    "prefix": s.prefix.marks(),
                    "start_time": s.start_time,
                    "hypotheses": s.hypotheses.iter().map(|h| json!({
                        "log_weight": h.log_weight,
                        "existence": h.existence,
                        "beta": h.density.as_ref().map(|d| d.components.iter()
                            .map(|c| (c.end_time, c.beta)).collect::<Vec<_>>()),
                        "associations": h.associations,
                    })).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let globals: Vec<Value> = post
        .globals
        .iter()
        .map(|g| json!({ "log_weight": g.log_weight, "selection": g.selection.to_nested(), "retired": g.retired }))
        .collect();
    let ppp: Vec<Value> = post
        .ppp
        .iter()
        .map(|p| json!({ "log_weight": p.log_weight, "start_time": p.start_time }))
        .collect();
    serde_json::to_string_pretty(&json!({
        "time": post.time,
        "ppp": ppp,
        "trees": trees,
        "globals": globals,
    }))
    .expect("snapshot is valid JSON")
}
