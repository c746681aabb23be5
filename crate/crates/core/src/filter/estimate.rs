use crate::error::Result;
use crate::tree::{Branch, TreeTrajectory};

use super::PMBMPosterior;

/// Trees of the most likely global hypothesis. Each branch with existence
/// above `gamma_d` is reported at its most likely end time.
pub fn estimate(post: &PMBMPosterior, gamma_d: f64) -> Result<Vec<TreeTrajectory>> {
    let Some(best) = post.best_global() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for (tree, sel) in post.trees.iter().zip(best.selection.iter()) {
        let nu = (post.time - tree.start_time + 1) as usize;
        let mut branches = Vec::new();
        for (slot, s) in tree.slots.iter().zip(sel) {
            let Some(h) = s else { continue };
            let hyp = &slot.hypotheses[*h as usize];
            if hyp.existence <= gamma_d {
                continue;
            }
            let Some(d) = &hyp.density else { continue };
            let Some(c) = d.most_likely() else { continue };
            let genealogy = d.genealogy_at(c).padded(nu);
            branches.push(Branch::new(genealogy, c.component.states())?);
        }
        if !branches.is_empty() {
            out.push(TreeTrajectory {
                start_time: tree.start_time,
                branches,
            });
        }
    }
    Ok(out)
}
