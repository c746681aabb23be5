//! Genealogy variables, branches and tree trajectories.
//!
//! A tree trajectory is a start time plus a set of branches. Each branch
//! carries a genealogy variable `ω = (ω¹,…,ω^ν)` with one mark per
//! generation: `1` survive, `0` dead, `m ≥ 2` spawned with mode `m`.
//! The branch identifier is the genealogy up to its last spawning.

use std::collections::HashSet;
use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Per-generation marks of one branch.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GenealogyVar(Vec<u8>);

impl GenealogyVar {
    pub fn new(marks: Vec<u8>) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidGenealogy {
            marks: marks.clone(),
            reason: reason.to_string(),
        };
        match marks.first() {
            None => return Err(invalid("empty genealogy (ν = 0)")),
            Some(&1) => {}
            Some(_) => return Err(invalid("first mark must be 1")),
        }
        if let Some(dead) = marks.iter().position(|&m| m == 0) {
            if marks[dead..].iter().any(|&m| m != 0) {
                return Err(invalid("nonzero mark after death"));
            }
        }
        Ok(Self(marks))
    }

    /// Root genealogy `(1)` of a newborn tree.
    pub fn root() -> Self {
        Self(vec![1])
    }

    /// All-ones genealogy of length `nu`.
    pub fn alive(nu: usize) -> Result<Self> {
        if nu == 0 {
            return Err(Error::InvalidGenealogy {
                marks: vec![],
                reason: "empty genealogy (ν = 0)".into(),
            });
        }
        Ok(Self(vec![1; nu]))
    }

    pub fn marks(&self) -> &[u8] {
        &self.0
    }

    /// Number of generations ν.
    pub fn generations(&self) -> usize {
        self.0.len()
    }

    /// Checks the mode bound `ω^i ≤ ϱ`.
    pub fn check_modes(&self, rho: usize) -> Result<()> {
        if self.0.iter().any(|&m| m as usize > rho) {
            return Err(Error::InvalidGenealogy {
                marks: self.0.clone(),
                reason: format!("mark exceeds number of modes {rho}"),
            });
        }
        Ok(())
    }

    /// Last alive generation `e(ω)`, 1-based.
    pub fn end_generation(&self) -> usize {
        self.0.iter().position(|&m| m == 0).unwrap_or(self.0.len())
    }

    /// Generation of the last spawning `i(ω)`, 1-based; 1 if never spawned.
    pub fn spawn_generation(&self) -> usize {
        self.0.iter().rposition(|&m| m > 1).map_or(1, |i| i + 1)
    }

    /// Number of states `ℓ(ω) = e(ω) − i(ω) + 1`.
    pub fn branch_length(&self) -> usize {
        self.end_generation() + 1 - self.spawn_generation()
    }

    pub fn unique_id(&self) -> BranchId {
        BranchId(self.0[..self.spawn_generation()].to_vec())
    }

    /// Whether the branch is alive at generation `gen` (1-based).
    pub fn alive_at(&self, gen: usize) -> bool {
        gen >= 1 && gen <= self.0.len() && self.0[gen - 1] != 0
    }

    pub fn is_alive(&self) -> bool {
        self.0.last().is_some_and(|&m| m != 0)
    }

    /// Appends one generation. Appending a nonzero mark to a dead branch
    /// would break the genealogy and is rejected.
    pub fn push(&mut self, mark: u8) -> Result<()> {
        if mark != 0 && !self.is_alive() {
            return Err(Error::InvalidGenealogy {
                marks: self.0.clone(),
                reason: format!("cannot append {mark} after death"),
            });
        }
        self.0.push(mark);
        Ok(())
    }

    pub fn with(&self, mark: u8) -> Result<Self> {
        let mut g = self.clone();
        g.push(mark)?;
        Ok(g)
    }

    /// Pads with zeros up to `nu` generations.
    pub fn padded(&self, nu: usize) -> Self {
        let mut marks = self.0.clone();
        marks.resize(nu.max(marks.len()), 0);
        Self(marks)
    }
}

impl fmt::Display for GenealogyVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_marks(f, &self.0)
    }
}

/// Genealogy prefix up to the last spawning; unique within a tree.
///
/// Ordering is lexicographic with the shorter prefix first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchId(Vec<u8>);

impl BranchId {
    pub fn main() -> Self {
        Self(vec![1])
    }

    pub fn new(marks: Vec<u8>) -> Result<Self> {
        let ok = marks.first() == Some(&1)
            && marks.iter().all(|&m| m >= 1)
            && (marks.len() == 1 || marks.last().is_some_and(|&m| m > 1));
        if !ok {
            return Err(Error::InvalidGenealogy {
                marks,
                reason: "not a branch identifier".into(),
            });
        }
        Ok(Self(marks))
    }

    pub fn marks(&self) -> &[u8] {
        &self.0
    }

    /// Generation at which the branch was spawned (1 for the main branch).
    pub fn spawn_generation(&self) -> usize {
        self.0.len()
    }

    /// Genealogy of this branch alive from its spawn generation up to
    /// generation `gen` inclusive.
    pub fn genealogy_alive_until(&self, gen: usize) -> Result<GenealogyVar> {
        if gen < self.0.len() {
            return Err(Error::InvalidGenealogy {
                marks: self.0.clone(),
                reason: format!("generation {gen} precedes spawn"),
            });
        }
        let mut marks = self.0.clone();
        marks.resize(gen, 1);
        Ok(GenealogyVar(marks))
    }

    /// Identifier of the branch spawned from this one with mode `m` at
    /// generation `gen`.
    pub fn spawn_child(&self, gen: usize, m: u8) -> Result<BranchId> {
        let mut g = self.genealogy_alive_until(gen - 1)?.0;
        g.push(m);
        BranchId::new(g)
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_marks(f, &self.0)
    }
}

fn write_marks(f: &mut fmt::Formatter<'_>, marks: &[u8]) -> fmt::Result {
    for (i, m) in marks.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{m}")?;
    }
    Ok(())
}

/// Maximum number of branches `ϱ^(ν−1)` in a ν-generation tree.
pub fn max_branches(nu: usize, rho: usize) -> Result<u64> {
    if nu == 0 || rho == 0 {
        return Err(Error::InvalidInput(format!("ν={nu}, ϱ={rho} must be ≥ 1")));
    }
    let exp = u32::try_from(nu - 1).map_err(|_| Error::Overflow(format!("ν={nu}")))?;
    (rho as u64)
        .checked_pow(exp)
        .ok_or_else(|| Error::Overflow(format!("{rho}^{exp} branches")))
}

/// Lazy lexicographic enumeration of every possible branch identifier of a
/// ν-generation tree. Position `j` (0-based here) is the branch index.
#[derive(Clone, Debug)]
pub struct BranchIds {
    nu: usize,
    rho: u8,
    current: Vec<u8>,
    started: bool,
}

impl Iterator for BranchIds {
    type Item = BranchId;

    fn next(&mut self) -> Option<BranchId> {
        loop {
            if !self.started {
                self.started = true;
                self.current = vec![1];
            } else if !self.advance() {
                return None;
            }
            let last = *self.current.last().unwrap();
            if self.current.len() == 1 || last > 1 {
                return Some(BranchId(self.current.clone()));
            }
        }
    }
}

impl BranchIds {
    /// Pre-order step over the prefix tree with children ordered 1..=ϱ.
    fn advance(&mut self) -> bool {
        if self.current.len() < self.nu && self.rho >= 1 {
            self.current.push(1);
            return true;
        }
        while let Some(&last) = self.current.last() {
            if self.current.len() == 1 {
                return false;
            }
            if last < self.rho {
                *self.current.last_mut().unwrap() += 1;
                return true;
            }
            self.current.pop();
        }
        false
    }
}

pub fn enumerate_branch_ids(nu: usize, rho: usize) -> Result<BranchIds> {
    max_branches(nu, rho)?;
    let rho = u8::try_from(rho).map_err(|_| Error::Overflow(format!("ϱ={rho} > 255")))?;
    Ok(BranchIds {
        nu,
        rho,
        current: Vec::new(),
        started: false,
    })
}

/// Branch indexing for a ν-generation tree with ϱ modes.
#[derive(Clone, Copy, Debug)]
pub struct BranchIndexer {
    pub nu: usize,
    pub rho: usize,
}

impl BranchIndexer {
    pub fn new(nu: usize, rho: usize) -> Result<Self> {
        max_branches(nu, rho)?;
        if rho > u8::MAX as usize {
            return Err(Error::Overflow(format!("ϱ={rho} > 255")));
        }
        Ok(Self { nu, rho })
    }

    pub fn count(&self) -> Result<u64> {
        max_branches(self.nu, self.rho)
    }

    /// Identifier with 1-based index `j`.
    pub fn id(&self, j: u64) -> Result<BranchId> {
        let n = self.count()?;
        if j == 0 || j > n {
            return Err(Error::InvalidInput(format!("branch index {j} not in 1..={n}")));
        }
        // walk the prefix tree using subtree counts instead of iterating
        let mut remaining = j - 1;
        let mut prefix = vec![1u8];
        loop {
            if prefix.len() == 1 || *prefix.last().unwrap() > 1 {
                if remaining == 0 {
                    return BranchId::new(prefix);
                }
                remaining -= 1;
            }
            let mut descended = false;
            for m in 1..=self.rho as u8 {
                let mut child = prefix.clone();
                child.push(m);
                let size = self.subtree_count(&child)?;
                if remaining < size {
                    prefix = child;
                    descended = true;
                    break;
                }
                remaining -= size;
            }
            if !descended {
                return Err(Error::InvalidInput(format!("branch index {j} unreachable")));
            }
        }
    }

    /// 1-based index of `id` in lexicographic order.
    pub fn index_of(&self, id: &BranchId) -> Result<u64> {
        let marks = id.marks();
        if marks.len() > self.nu || marks.iter().any(|&m| m as usize > self.rho) {
            return Err(Error::InvalidInput(format!(
                "id ({id}) not in a {}-generation tree",
                self.nu
            )));
        }
        let mut rank: u64 = 0;
        for depth in 1..marks.len() {
            let prefix = &marks[..depth];
            if depth == 1 || prefix[depth - 1] > 1 {
                rank += 1;
            }
            for m in 1..marks[depth] {
                let mut sib = prefix.to_vec();
                sib.push(m);
                rank = rank
                    .checked_add(self.subtree_count(&sib)?)
                    .ok_or_else(|| Error::Overflow("branch rank".into()))?;
            }
        }
        Ok(rank + 1)
    }

    /// Number of valid identifiers in the subtree rooted at `prefix`.
    fn subtree_count(&self, prefix: &[u8]) -> Result<u64> {
        let d = prefix.len();
        if d > self.nu {
            return Ok(0);
        }
        let own = u64::from(*prefix.last().unwrap() > 1 || d == 1);
        let below = max_branches(self.nu - d + 1, self.rho)? - 1;
        Ok(own + below)
    }

    /// `ℓ_max(ν, j)`: steps from the spawn generation of `id` to ν.
    pub fn max_length(&self, id: &BranchId) -> usize {
        self.nu + 1 - id.spawn_generation()
    }

    /// `ω_(ν,j,ℓ)`: genealogy of branch `id` with length `len`.
    pub fn genealogy(&self, id: &BranchId, len: usize) -> Result<GenealogyVar> {
        let max = self.max_length(id);
        if len == 0 || len > max {
            return Err(Error::InvalidInput(format!("length {len} not in 1..={max}")));
        }
        let end = id.spawn_generation() + len - 1;
        Ok(id.genealogy_alive_until(end)?.padded(self.nu))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub genealogy: GenealogyVar,
    pub states: Vec<DVector<f64>>,
}

impl Branch {
    pub fn new(genealogy: GenealogyVar, states: Vec<DVector<f64>>) -> Result<Self> {
        if states.len() != genealogy.branch_length() {
            return Err(Error::DimensionMismatch(format!(
                "branch ({genealogy}) needs {} states, got {}",
                genealogy.branch_length(),
                states.len()
            )));
        }
        Ok(Self { genealogy, states })
    }

    pub fn id(&self) -> BranchId {
        self.genealogy.unique_id()
    }

    /// Absolute time steps covered by the states, given the tree start time.
    pub fn time_span(&self, tree_start: u32) -> (u32, u32) {
        let first = tree_start + self.genealogy.spawn_generation() as u32 - 1;
        let last = tree_start + self.genealogy.end_generation() as u32 - 1;
        (first, last)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeTrajectory {
    pub start_time: u32,
    pub branches: Vec<Branch>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoBranches,
    InvalidStartTime,
    HorizonMismatch { branch: usize, expected: usize, found: usize },
    LengthMismatch { branch: usize, expected: usize, found: usize },
    DuplicateId(BranchId),
    OrphanSpawn { branch: usize, generation: usize },
    MissingMainBranch,
    TooManyBranches { count: usize, max: u64 },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl TreeTrajectory {
    /// Generations ν of the first branch (all branches should agree).
    pub fn generations(&self) -> usize {
        self.branches.first().map_or(0, |b| b.genealogy.generations())
    }

    /// Last time step covered by the tree, `t + ν − 1`.
    pub fn end_time(&self) -> u32 {
        self.start_time + self.generations().max(1) as u32 - 1
    }

    pub fn validate(&self, rho: usize) -> ValidationReport {
        validate_tree(self, rho)
    }

    pub fn targets_at(&self, k: u32) -> Result<Vec<&DVector<f64>>> {
        targets_at_time(self, k)
    }
}

/// Reports every violated tree constraint. `rho` bounds the branch count;
/// pass `usize::MAX` to skip that check.
pub fn validate_tree(tree: &TreeTrajectory, rho: usize) -> ValidationReport {
    let mut violations = Vec::new();
    if tree.start_time == 0 {
        violations.push(Violation::InvalidStartTime);
    }
    if tree.branches.is_empty() {
        violations.push(Violation::NoBranches);
        violations.push(Violation::MissingMainBranch);
        return ValidationReport { violations };
    }
    let nu = tree.generations();
    for (i, b) in tree.branches.iter().enumerate() {
        let found = b.genealogy.generations();
        if found != nu {
            violations.push(Violation::HorizonMismatch {
                branch: i,
                expected: nu,
                found,
            });
        }
        let expected = b.genealogy.branch_length();
        if b.states.len() != expected {
            violations.push(Violation::LengthMismatch {
                branch: i,
                expected,
                found: b.states.len(),
            });
        }
    }
    let mut seen = HashSet::new();
    for b in &tree.branches {
        let id = b.id();
        if !seen.insert(id.clone()) {
            violations.push(Violation::DuplicateId(id));
        }
    }
    if !seen.contains(&BranchId::main()) {
        violations.push(Violation::MissingMainBranch);
    }
    for (i, b) in tree.branches.iter().enumerate() {
        let marks = b.genealogy.marks();
        for (g, &m) in marks.iter().enumerate().skip(1) {
            if m <= 1 {
                continue;
            }
            let has_parent = tree.branches.iter().enumerate().any(|(j, p)| {
                let pm = p.genealogy.marks();
                j != i && pm.len() > g && pm[..g] == marks[..g] && pm[g] <= 1
            });
            if !has_parent {
                violations.push(Violation::OrphanSpawn {
                    branch: i,
                    generation: g + 1,
                });
            }
        }
    }
    if rho != usize::MAX {
        if let Ok(max) = max_branches(nu.max(1), rho) {
            if tree.branches.len() as u64 > max {
                violations.push(Violation::TooManyBranches {
                    count: tree.branches.len(),
                    max,
                });
            }
        }
    }
    ValidationReport { violations }
}

/// States of the branches alive at time step `k`.
pub fn targets_at_time(tree: &TreeTrajectory, k: u32) -> Result<Vec<&DVector<f64>>> {
    let first = tree.start_time;
    let last = tree.end_time();
    if k < first || k > last {
        return Err(Error::OutOfRange { k, first, last });
    }
    let gen = (k - first + 1) as usize;
    Ok(tree
        .branches
        .iter()
        .filter(|b| b.genealogy.alive_at(gen) && gen >= b.genealogy.spawn_generation())
        .filter_map(|b| b.states.get(gen - b.genealogy.spawn_generation()))
        .collect())
}

/// Writes trees in the line format `t; ω; x¹; x²; …`, one line per branch,
/// trees separated by a blank line. Floats use the shortest round-trip form.
pub fn encode_trees(trees: &[TreeTrajectory]) -> String {
    let mut out = String::new();
    for (i, tree) in trees.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for b in &tree.branches {
            out.push_str(&format!("{}; {}", tree.start_time, b.genealogy));
            for s in &b.states {
                out.push_str("; ");
                let parts: Vec<String> = s.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&parts.join(" "));
            }
            out.push('\n');
        }
    }
    out
}

pub fn decode_trees(text: &str) -> Result<Vec<TreeTrajectory>> {
    let mut trees = Vec::new();
    let mut current: Option<TreeTrajectory> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = n + 1;
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            trees.extend(current.take());
            continue;
        }
        let perr = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let mut fields = line.split(';').map(str::trim);
        let start: u32 = fields
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|e| perr(format!("start time: {e}")))?;
        let marks = fields
            .next()
            .ok_or_else(|| perr("missing genealogy".into()))?
            .split(',')
            .map(|m| m.trim().parse::<u8>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| perr(format!("genealogy: {e}")))?;
        let genealogy = GenealogyVar::new(marks).map_err(|e| perr(e.to_string()))?;
        let states = fields
            .filter(|f| !f.is_empty())
            .map(|f| {
                f.split_whitespace()
                    .map(str::parse::<f64>)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map(DVector::from_vec)
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| perr(format!("state: {e}")))?;
        let branch = Branch::new(genealogy, states).map_err(|e| perr(e.to_string()))?;
        match &mut current {
            Some(t) if t.start_time == start => t.branches.push(branch),
            Some(_) => return Err(perr("start time differs within a tree".into())),
            None => {
                current = Some(TreeTrajectory {
                    start_time: start,
                    branches: vec![branch],
                })
            }
        }
    }
    trees.extend(current);
    Ok(trees)
}
