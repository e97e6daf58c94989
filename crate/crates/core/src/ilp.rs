//! The linearized joint caching and channel problem as a 0-1 integer
//! program in CPLEX LP text format, plus a reader and a constraint checker
//! for such files.
//!
//! Variable names (node indices are dense: MBS 0, SBS, then UEs; users and
//! channels count from 0):
//!
//! | name | meaning |
//! |------|---------|
//! | `c_i_f` | node `i` caches file `f` |
//! | `r_u_w` | user `u` is on channel `w` |
//! | `x_u_f` | request `(u, f)` counts as delivered |
//! | `phi_i_f` | no node in `0..=i` caches `f` |
//! | `phix_x_i_f` | among nodes `0..=i`, exactly the ones equal to `x` cache `f` |
//! | `rho_u_v_w` | `u` on `w` and no other user in `0..=v` on `w` |
//! | `rr_u_v_w` | users `u` and `v` both on `w` |
//! | `om_u_w_f` | `rho_u_last_w * phi_last_f` |
//! | `omx_u_w_f_x` | `rho_u_last_w * phix_x_last_f` |
//! | `gam_u_v_w_f` | `rr_u_v_w * phi_last_f` |
//! | `gamx_u_v_w_f_x` | `rr_u_v_w * phix_x_last_f` |
//! | `lam_u_v_w_f_g_y` | `gam_u_v_w_f * phix_y_last_g` |
//! | `lamx_u_v_w_f_g_x_y` | `gamx_u_v_w_f_x * phix_y_last_g` |
//!
//! Index ranges follow the delivery bound: `x` ranges over nodes other
//! than the receiver, `y` over nodes other than the receiver, the
//! transmitter and the interfering user, `v != u`, and `g != f`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::DelayBoundTable;
use crate::delivery::{Assignment, AuxiliaryVariables};
use crate::error::{Error, Result};
use crate::popularity::PopularityModel;
use crate::topology::NetworkInstance;

pub const DEFAULT_VARIABLE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IlpOptions {
    pub max_variables: usize,
}

impl Default for IlpOptions {
    fn default() -> Self {
        IlpOptions {
            max_variables: DEFAULT_VARIABLE_CAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarName {
    C {
        i: usize,
        f: usize,
    },
    R {
        u: usize,
        w: usize,
    },
    X {
        u: usize,
        f: usize,
    },
    Phi {
        i: usize,
        f: usize,
    },
    PhiX {
        x: usize,
        i: usize,
        f: usize,
    },
    Rho {
        u: usize,
        v: usize,
        w: usize,
    },
    Pair {
        u: usize,
        v: usize,
        w: usize,
    },
    Omega {
        u: usize,
        w: usize,
        f: usize,
    },
    OmegaX {
        u: usize,
        w: usize,
        f: usize,
        x: usize,
    },
    Gamma {
        u: usize,
        v: usize,
        w: usize,
        f: usize,
    },
    GammaX {
        u: usize,
        v: usize,
        w: usize,
        f: usize,
        x: usize,
    },
    Lambda {
        u: usize,
        v: usize,
        w: usize,
        f: usize,
        g: usize,
        y: usize,
    },
    LambdaX {
        u: usize,
        v: usize,
        w: usize,
        f: usize,
        g: usize,
        x: usize,
        y: usize,
    },
}

impl fmt::Display for VarName {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        use VarName::*;
        match *self {
            C { i, f } => write!(out, "c_{i}_{f}"),
            R { u, w } => write!(out, "r_{u}_{w}"),
            X { u, f } => write!(out, "x_{u}_{f}"),
            Phi { i, f } => write!(out, "phi_{i}_{f}"),
            PhiX { x, i, f } => write!(out, "phix_{x}_{i}_{f}"),
            Rho { u, v, w } => write!(out, "rho_{u}_{v}_{w}"),
            Pair { u, v, w } => write!(out, "rr_{u}_{v}_{w}"),
            Omega { u, w, f } => write!(out, "om_{u}_{w}_{f}"),
            OmegaX { u, w, f, x } => write!(out, "omx_{u}_{w}_{f}_{x}"),
            Gamma { u, v, w, f } => write!(out, "gam_{u}_{v}_{w}_{f}"),
            GammaX { u, v, w, f, x } => write!(out, "gamx_{u}_{v}_{w}_{f}_{x}"),
            Lambda { u, v, w, f, g, y } => write!(out, "lam_{u}_{v}_{w}_{f}_{g}_{y}"),
            LambdaX { u, v, w, f, g, x, y } => write!(out, "lamx_{u}_{v}_{w}_{f}_{g}_{x}_{y}"),
        }
    }
}

impl FromStr for VarName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("not a model variable name: {s:?}"));
        let mut parts = s.split('_');
        let prefix = parts.next().ok_or_else(bad)?;
        let idx: Vec<usize> = parts.map(|p| p.parse().map_err(|_| bad())).collect::<Result<_>>()?;
        use VarName::*;
        let v = match (prefix, idx.as_slice()) {
            ("c", &[i, f]) => C { i, f },
            ("r", &[u, w]) => R { u, w },
            ("x", &[u, f]) => X { u, f },
            ("phi", &[i, f]) => Phi { i, f },
            ("phix", &[x, i, f]) => PhiX { x, i, f },
            ("rho", &[u, v, w]) => Rho { u, v, w },
            ("rr", &[u, v, w]) => Pair { u, v, w },
            ("om", &[u, w, f]) => Omega { u, w, f },
            ("omx", &[u, w, f, x]) => OmegaX { u, w, f, x },
            ("gam", &[u, v, w, f]) => Gamma { u, v, w, f },
            ("gamx", &[u, v, w, f, x]) => GammaX { u, v, w, f, x },
            ("lam", &[u, v, w, f, g, y]) => Lambda { u, v, w, f, g, y },
            ("lamx", &[u, v, w, f, g, x, y]) => LambdaX { u, v, w, f, g, x, y },
            _ => return Err(bad()),
        };
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        out.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpModel {
    pub maximize: bool,
    pub objective_name: String,
    pub objective: Vec<(String, f64)>,
    pub constraints: Vec<LinearConstraint>,
    pub binaries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub name: String,
    pub lhs: f64,
    pub sense: Sense,
    pub rhs: f64,
    /// Signed slack; negative on the violated side.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub violations: Vec<ConstraintViolation>,
    pub objective: f64,
    pub missing: Vec<String>,
    pub non_binary: Vec<String>,
}

impl ModelReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty() && self.missing.is_empty() && self.non_binary.is_empty()
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

fn write_expr<W: Write>(out: &mut W, head: &str, terms: &[(String, f64)]) -> std::io::Result<usize> {
    write!(out, "{head}")?;
    let mut width = head.len();
    if terms.is_empty() {
        write!(out, " 0")?;
        return Ok(width + 2);
    }
    for (k, (name, coef)) in terms.iter().enumerate() {
        let sign = if *coef < 0.0 { "-" } else { "+" };
        let mag = coef.abs();
        let body = if mag == 1.0 {
            name.clone()
        } else {
            format!("{} {name}", fmt_num(mag))
        };
        let piece = if k == 0 && sign == "+" {
            format!(" {body}")
        } else {
            format!(" {sign} {body}")
        };
        if width + piece.len() > 200 {
            write!(out, "\n   ")?;
            width = 3;
        }
        write!(out, "{piece}")?;
        width += piece.len();
    }
    Ok(width)
}

impl LpModel {
    pub fn num_variables(&self) -> usize {
        self.binaries.len()
    }

    pub fn write<W: Write>(&self, mut out: W, comment: &[String]) -> Result<()> {
        for line in comment {
            writeln!(out, "\\ {line}")?;
        }
        writeln!(out, "{}", if self.maximize { "Maximize" } else { "Minimize" })?;
        write_expr(&mut out, &format!(" {}:", self.objective_name), &self.objective)?;
        writeln!(out)?;
        writeln!(out, "Subject To")?;
        for c in &self.constraints {
            write_expr(&mut out, &format!(" {}:", c.name), &c.terms)?;
            writeln!(out, " {} {}", c.sense, fmt_num(c.rhs))?;
        }
        writeln!(out, "Binaries")?;
        let mut width = 0;
        for b in &self.binaries {
            if width > 0 && width + b.len() + 1 > 200 {
                writeln!(out)?;
                width = 0;
            }
            write!(out, " {b}")?;
            width += b.len() + 1;
        }
        if width > 0 {
            writeln!(out)?;
        }
        writeln!(out, "End")?;
        Ok(())
    }

    pub fn to_lp_string(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf, &[]).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn parse(text: &str) -> Result<Self> {
        parse_lp(text)
    }

    /// Objective at `values`; absent variables count as 0.
    pub fn objective_value(&self, values: &HashMap<String, f64>) -> f64 {
        self.objective
            .iter()
            .map(|(n, c)| c * values.get(n).copied().unwrap_or(0.0))
            .sum()
    }

    /// Checks every constraint at `values` with relative tolerance `tol`.
    pub fn check(&self, values: &HashMap<String, f64>, tol: f64) -> ModelReport {
        let mut missing = BTreeSet::new();
        let mut violations = Vec::new();
        for c in &self.constraints {
            let mut lhs = 0.0;
            let mut scale = c.rhs.abs();
            for (n, coef) in &c.terms {
                let v = match values.get(n) {
                    Some(v) => *v,
                    None => {
                        missing.insert(n.clone());
                        0.0
                    }
                };
                lhs += coef * v;
                scale += (coef * v).abs();
            }
            let slack = match c.sense {
                Sense::Le => c.rhs - lhs,
                Sense::Ge => lhs - c.rhs,
                Sense::Eq => -(lhs - c.rhs).abs(),
            };
            if slack < -tol * (1.0 + scale) {
                violations.push(ConstraintViolation {
                    name: c.name.clone(),
                    lhs,
                    sense: c.sense,
                    rhs: c.rhs,
                    slack,
                });
            }
        }
        for b in &self.binaries {
            if !values.contains_key(b) {
                missing.insert(b.clone());
            }
        }
        let non_binary = self
            .binaries
            .iter()
            .filter(|b| values.get(*b).is_some_and(|v| *v != 0.0 && *v != 1.0))
            .cloned()
            .collect();
        ModelReport {
            violations,
            objective: self.objective_value(values),
            missing: missing.into_iter().collect(),
            non_binary,
        }
    }
}

/// Upper estimate of the variable count, checked against the cap before
/// anything is built.
pub fn estimate_variables(instance: &NetworkInstance) -> f64 {
    let n = instance.node_count() as f64;
    let u = instance.num_ue as f64;
    let w = instance.num_channels() as f64;
    let f = instance.num_files() as f64;
    n * f * (2.0 + n)
        + u * w * (1.0 + 2.0 * u)
        + u * f
        + u * w * f * n
        + u * u * w * f * (1.0 + n)
        + u * u * w * f * f * n * (1.0 + n)
}

#[derive(Clone, Copy)]
enum Lit {
    Pos(VarName),
    Neg(VarName),
}

struct Builder {
    nodes: usize,
    users: usize,
    vars: BTreeSet<VarName>,
}

impl Builder {
    fn last(&self) -> usize {
        self.nodes - 1
    }

    fn phi(&self, f: usize) -> VarName {
        VarName::Phi { i: self.last(), f }
    }

    fn phix(&self, x: usize, f: usize) -> VarName {
        VarName::PhiX { x, i: self.last(), f }
    }

    fn rho(&self, u: usize, w: usize) -> VarName {
        VarName::Rho {
            u,
            v: self.users - 1,
            w,
        }
    }

    /// How an auxiliary variable is defined: equal to one literal, or the
    /// product of two.
    fn definition(&self, v: VarName) -> Option<(Lit, Option<Lit>)> {
        use VarName::*;
        let d = match v {
            C { .. } | R { .. } | X { .. } => return None,
            Phi { i, f } => {
                let bar = Lit::Neg(C { i, f });
                if i == 0 {
                    (bar, None)
                } else {
                    (Lit::Pos(Phi { i: i - 1, f }), Some(bar))
                }
            }
            PhiX { x, i, f } => {
                let bar = if i == x {
                    Lit::Pos(C { i, f })
                } else {
                    Lit::Neg(C { i, f })
                };
                if i == 0 {
                    (bar, None)
                } else {
                    (Lit::Pos(PhiX { x, i: i - 1, f }), Some(bar))
                }
            }
            Rho { u, v, w } => {
                let delta = if v == u {
                    Lit::Pos(R { u, w })
                } else {
                    Lit::Neg(R { u: v, w })
                };
                if v == 0 {
                    (delta, None)
                } else {
                    (Lit::Pos(Rho { u, v: v - 1, w }), Some(delta))
                }
            }
            Pair { u, v, w } => (Lit::Pos(R { u, w }), Some(Lit::Pos(R { u: v, w }))),
            Omega { u, w, f } => (Lit::Pos(self.rho(u, w)), Some(Lit::Pos(self.phi(f)))),
            OmegaX { u, w, f, x } => (Lit::Pos(self.rho(u, w)), Some(Lit::Pos(self.phix(x, f)))),
            Gamma { u, v, w, f } => (Lit::Pos(Pair { u, v, w }), Some(Lit::Pos(self.phi(f)))),
            GammaX { u, v, w, f, x } => (Lit::Pos(Pair { u, v, w }), Some(Lit::Pos(self.phix(x, f)))),
            Lambda { u, v, w, f, g, y } => (Lit::Pos(Gamma { u, v, w, f }), Some(Lit::Pos(self.phix(y, g)))),
            LambdaX { u, v, w, f, g, x, y } => (Lit::Pos(GammaX { u, v, w, f, x }), Some(Lit::Pos(self.phix(y, g)))),
        };
        Some(d)
    }

    fn need(&mut self, v: VarName) {
        let mut stack = vec![v];
        while let Some(v) = stack.pop() {
            if !self.vars.insert(v) {
                continue;
            }
            if let Some((a, b)) = self.definition(v) {
                for lit in std::iter::once(a).chain(b) {
                    let (Lit::Pos(d) | Lit::Neg(d)) = lit;
                    stack.push(d);
                }
            }
        }
    }
}

/// Moves a literal onto the left side with coefficient `sign`, returning the
/// constant it contributes.
fn push_lit(terms: &mut Vec<(String, f64)>, lit: Lit, sign: f64) -> f64 {
    match lit {
        Lit::Pos(v) => {
            terms.push((v.to_string(), sign));
            0.0
        }
        Lit::Neg(v) => {
            terms.push((v.to_string(), -sign));
            sign
        }
    }
}

fn definition_constraints(name: VarName, def: (Lit, Option<Lit>)) -> Vec<LinearConstraint> {
    let z = name.to_string();
    let tie = |tag: &str, lits: &[Lit], sense: Sense, rhs: f64| {
        let mut terms = vec![(z.clone(), 1.0)];
        let mut constant = 0.0;
        for &l in lits {
            constant += push_lit(&mut terms, l, -1.0);
        }
        LinearConstraint {
            name: format!("{tag}_{z}"),
            terms,
            sense,
            rhs: rhs - constant,
        }
    };
    match def {
        (a, None) => vec![tie("def", &[a], Sense::Eq, 0.0)],
        (a, Some(b)) => vec![
            tie("ub1", &[a], Sense::Le, 0.0),
            tie("ub2", &[b], Sense::Le, 0.0),
            tie("lb", &[a, b], Sense::Ge, -1.0),
        ],
    }
}

/// Assembles the integer program for `instance`.
pub fn build_ilp(
    instance: &NetworkInstance,
    popularity: &PopularityModel,
    table: &DelayBoundTable,
    opts: &IlpOptions,
) -> Result<LpModel> {
    let estimate = estimate_variables(instance);
    if estimate > opts.max_variables as f64 {
        return Err(Error::ModelTooLarge {
            variables: estimate.min(usize::MAX as f64) as usize,
            cap: opts.max_variables,
        });
    }
    let n = instance.node_count();
    let users = instance.num_ue;
    let channels = instance.num_channels();
    let files = instance.num_files();
    let mbs = instance.mbs();
    let threshold = instance.params.delay_threshold;
    let mut b = Builder {
        nodes: n,
        users,
        vars: BTreeSet::new(),
    };
    for i in 0..n {
        for f in 0..files {
            b.need(VarName::C { i, f });
        }
    }
    for u in 0..users {
        for w in 0..channels {
            b.need(VarName::R { u, w });
        }
    }

    let mut objective = Vec::new();
    let mut delay = Vec::new();
    let mut guards = Vec::new();
    for u in 0..users {
        let rx = instance.ue_node(u);
        for f in 0..files {
            let xv = VarName::X { u, f };
            b.need(xv);
            let q = popularity.averaged_popularity(u, f)?;
            objective.push((xv.to_string(), q / users as f64));

            let mut terms: Vec<(VarName, f64)> = Vec::new();
            terms.push((b.phi(f), instance.params.backhaul_delay));
            for w in 0..channels {
                terms.push((VarName::Omega { u, w, f }, table.g(mbs, u, None)?));
            }
            for y in 0..n {
                if y == rx || y == mbs {
                    continue;
                }
                for w in 0..channels {
                    for v in 0..users {
                        if v == u || instance.ue_node(v) == y {
                            continue;
                        }
                        for g in (0..files).filter(|&g| g != f) {
                            let qv = popularity.averaged_popularity(v, g)?;
                            terms.push((VarName::Lambda { u, v, w, f, g, y }, qv * table.g(mbs, u, Some(y))?));
                        }
                    }
                }
            }
            for x in 0..n {
                if x == rx {
                    continue;
                }
                for w in 0..channels {
                    terms.push((VarName::OmegaX { u, w, f, x }, table.g(x, u, None)?));
                }
                for y in 0..n {
                    if y == rx || y == x {
                        continue;
                    }
                    for w in 0..channels {
                        for v in 0..users {
                            let vn = instance.ue_node(v);
                            if v == u || vn == x || vn == y {
                                continue;
                            }
                            for g in (0..files).filter(|&g| g != f) {
                                let qv = popularity.averaged_popularity(v, g)?;
                                terms.push((VarName::LambdaX { u, v, w, f, g, x, y }, qv * table.g(x, u, Some(y))?));
                            }
                        }
                    }
                }
            }

            let mut finite = Vec::new();
            let mut worst = 0.0;
            for (v, coef) in terms {
                b.need(v);
                if coef.is_finite() {
                    if coef != 0.0 {
                        worst += coef.max(0.0);
                        finite.push((v.to_string(), coef));
                    }
                } else {
                    guards.push(LinearConstraint {
                        name: format!("guard_{xv}_{v}"),
                        terms: vec![(v.to_string(), 1.0), (xv.to_string(), 1.0)],
                        sense: Sense::Le,
                        rhs: 1.0,
                    });
                }
            }
            let big = (worst - threshold).max(0.0);
            if big > 0.0 && threshold.is_finite() {
                finite.push((xv.to_string(), big));
                delay.push(LinearConstraint {
                    name: format!("delay_{u}_{f}"),
                    terms: finite,
                    sense: Sense::Le,
                    rhs: threshold + big,
                });
            }
        }
    }

    let mut constraints = delay;
    constraints.append(&mut guards);
    for i in 0..n {
        constraints.push(LinearConstraint {
            name: format!("capacity_{i}"),
            terms: (0..files).map(|f| (VarName::C { i, f }.to_string(), 1.0)).collect(),
            sense: Sense::Le,
            rhs: instance.cache_slots(i) as f64,
        });
    }
    for f in 0..files {
        constraints.push(LinearConstraint {
            name: format!("single_copy_{f}"),
            terms: (0..n).map(|i| (VarName::C { i, f }.to_string(), 1.0)).collect(),
            sense: Sense::Le,
            rhs: 1.0,
        });
    }
    for u in 0..users {
        constraints.push(LinearConstraint {
            name: format!("one_channel_{u}"),
            terms: (0..channels).map(|w| (VarName::R { u, w }.to_string(), 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    for w in 0..channels {
        constraints.push(LinearConstraint {
            name: format!("reuse_{w}"),
            terms: (0..users).map(|u| (VarName::R { u, w }.to_string(), 1.0)).collect(),
            sense: Sense::Le,
            rhs: instance.reuse_limit() as f64,
        });
    }
    for &v in &b.vars {
        if let Some(def) = b.definition(v) {
            constraints.extend(definition_constraints(v, def));
        }
    }
    if b.vars.len() > opts.max_variables {
        return Err(Error::ModelTooLarge {
            variables: b.vars.len(),
            cap: opts.max_variables,
        });
    }
    Ok(LpModel {
        maximize: true,
        objective_name: "sdr".into(),
        objective,
        constraints,
        binaries: b.vars.iter().map(|v| v.to_string()).collect(),
    })
}

/// Builds the model and writes it to `path`.
pub fn emit_ilp(
    instance: &NetworkInstance,
    popularity: &PopularityModel,
    table: &DelayBoundTable,
    opts: &IlpOptions,
    path: &Path,
) -> Result<LpModel> {
    let model = build_ilp(instance, popularity, table, opts)?;
    let out = BufWriter::new(File::create(path)?);
    let comment = vec![
        format!(
            "joint caching and channel allocation: {} nodes, {} users, {} channels, {} files",
            instance.node_count(),
            instance.num_ue,
            instance.num_channels(),
            instance.num_files()
        ),
        format!(
            "{} variables, {} constraints",
            model.num_variables(),
            model.constraints.len()
        ),
    ];
    model.write(out, &comment)?;
    Ok(model)
}

/// Value of one model variable under `a`, with auxiliaries taken from
/// their product chains.
pub fn variable_value(a: &Assignment, aux: &AuxiliaryVariables, v: VarName) -> f64 {
    use VarName::*;
    let bit = match v {
        C { i, f } => a.caching.get(i, f),
        R { u, w } => a.channels.get(u, w),
        X { u, f } => a.delivery.get(u, f),
        Phi { i, f } => aux.phi_chain(i, f),
        PhiX { x, i, f } => aux.phix_chain(x, i, f),
        Rho { u, v, w } => aux.rho_chain(u, v, w),
        Pair { u, v, w } => aux.pair(u, v, w),
        Omega { u, w, f } => aux.omega(u, w, f),
        OmegaX { u, w, f, x } => aux.omega_x(u, w, f, x),
        Gamma { u, v, w, f } => aux.gamma(u, v, w, f),
        GammaX { u, v, w, f, x } => aux.gamma_x(u, v, w, f, x),
        Lambda { u, v, w, f, g, y } => aux.lambda(u, v, w, f, g, y),
        LambdaX { u, v, w, f, g, x, y } => aux.lambda_x(u, v, w, f, g, x, y),
    };
    bit as f64
}

/// Values for every variable of `model` implied by `a`.
pub fn assignment_values(model: &LpModel, instance: &NetworkInstance, a: &Assignment) -> Result<HashMap<String, f64>> {
    a.check_shape(instance)?;
    let aux = AuxiliaryVariables::from_assignment(a);
    model
        .binaries
        .iter()
        .map(|name| {
            let v: VarName = name.parse()?;
            Ok((name.clone(), variable_value(a, &aux, v)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Sign(f64),
    Colon,
    Op(Sense),
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok>> {
    let err = |m: String| Error::ModelParse {
        line: lineno,
        message: m,
    };
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let ch = chars[k];
        match ch {
            '\\' => break,
            c if c.is_whitespace() => k += 1,
            '+' | '-' => {
                toks.push(Tok::Sign(if ch == '-' { -1.0 } else { 1.0 }));
                k += 1;
            }
            ':' => {
                toks.push(Tok::Colon);
                k += 1;
            }
            '<' | '>' | '=' => {
                let mut op = String::from(ch);
                k += 1;
                if k < chars.len() && matches!(chars[k], '<' | '>' | '=') {
                    op.push(chars[k]);
                    k += 1;
                }
                let sense = match op.as_str() {
                    "<" | "<=" | "=<" => Sense::Le,
                    ">" | ">=" | "=>" => Sense::Ge,
                    "=" => Sense::Eq,
                    _ => return Err(err(format!("unknown operator {op:?}"))),
                };
                toks.push(Tok::Op(sense));
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = k;
                while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                    k += 1;
                }
                if k < chars.len() && matches!(chars[k], 'e' | 'E') {
                    let mut j = k + 1;
                    if j < chars.len() && matches!(chars[j], '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        k = j;
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                    }
                }
                let text: String = chars[start..k].iter().collect();
                let v = text.parse().map_err(|_| err(format!("bad number {text:?}")))?;
                toks.push(Tok::Num(v));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = k;
                while k < chars.len() && (chars[k].is_alphanumeric() || matches!(chars[k], '_' | '.')) {
                    k += 1;
                }
                toks.push(Tok::Name(chars[start..k].iter().collect()));
            }
            _ => return Err(err(format!("unexpected character {ch:?}"))),
        }
    }
    Ok(toks)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Start,
    Objective,
    Constraints,
    Binaries,
    Done,
}

fn section_header(line: &str) -> Option<(Section, bool)> {
    let t = line.trim().to_ascii_lowercase();
    match t.as_str() {
        "maximize" | "maximum" | "max" => Some((Section::Objective, true)),
        "minimize" | "minimum" | "min" => Some((Section::Objective, false)),
        "subject to" | "such that" | "st" | "s.t." => Some((Section::Constraints, false)),
        "binaries" | "binary" | "bin" => Some((Section::Binaries, false)),
        "end" => Some((Section::Done, false)),
        _ => None,
    }
}

/// Parses `[name :] expr` from a token stream, stopping at an operator.
fn parse_terms(toks: &[(Tok, usize)], mut k: usize) -> Result<(Vec<(String, f64)>, usize)> {
    let mut terms = Vec::new();
    while k < toks.len() {
        if matches!(toks[k].0, Tok::Op(_)) {
            break;
        }
        let line = toks[k].1;
        let mut coef = 1.0;
        let mut seen_sign = false;
        while let Some((Tok::Sign(s), _)) = toks.get(k) {
            coef *= s;
            seen_sign = true;
            k += 1;
        }
        if let Some((Tok::Num(v), _)) = toks.get(k) {
            coef *= v;
            k += 1;
        }
        match toks.get(k) {
            Some((Tok::Name(n), _)) => {
                terms.push((n.clone(), coef));
                k += 1;
            }
            Some((Tok::Op(_), _)) | None if !seen_sign && coef == 0.0 => {}
            _ => {
                return Err(Error::ModelParse {
                    line,
                    message: "expected a variable".into(),
                })
            }
        }
    }
    Ok((terms, k))
}

fn split_label(toks: &[(Tok, usize)]) -> (Option<String>, usize) {
    match (toks.first(), toks.get(1)) {
        (Some((Tok::Name(n), _)), Some((Tok::Colon, _))) => (Some(n.clone()), 2),
        _ => (None, 0),
    }
}

fn parse_lp(text: &str) -> Result<LpModel> {
    let mut section = Section::Start;
    let mut maximize = true;
    let mut objective_toks = Vec::new();
    let mut constraint_toks: Vec<(Tok, usize)> = Vec::new();
    let mut binaries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        if let Some((s, max)) = section_header(line) {
            if s == Section::Objective {
                maximize = max;
            }
            section = s;
            continue;
        }
        let toks = tokenize(line, lineno)?;
        match section {
            Section::Start | Section::Done => {
                return Err(Error::ModelParse {
                    line: lineno,
                    message: "content outside a section".into(),
                })
            }
            Section::Objective => objective_toks.extend(toks.into_iter().map(|t| (t, lineno))),
            Section::Constraints => constraint_toks.extend(toks.into_iter().map(|t| (t, lineno))),
            Section::Binaries => {
                for t in toks {
                    match t {
                        Tok::Name(n) => binaries.push(n),
                        _ => {
                            return Err(Error::ModelParse {
                                line: lineno,
                                message: "expected variable names".into(),
                            })
                        }
                    }
                }
            }
        }
    }
    if section != Section::Done {
        return Err(Error::ModelParse {
            line: text.lines().count(),
            message: "missing End".into(),
        });
    }

    let (objective_name, start) = split_label(&objective_toks);
    let (objective, end) = parse_terms(&objective_toks, start)?;
    if end != objective_toks.len() {
        return Err(Error::ModelParse {
            line: objective_toks[end].1,
            message: "operator in objective".into(),
        });
    }

    let mut constraints = Vec::new();
    let mut k = 0;
    while k < constraint_toks.len() {
        let (label, skip) = split_label(&constraint_toks[k..]);
        let line = constraint_toks[k].1;
        let (terms, j) = parse_terms(&constraint_toks, k + skip)?;
        let sense = match constraint_toks.get(j) {
            Some((Tok::Op(s), _)) => *s,
            _ => {
                return Err(Error::ModelParse {
                    line,
                    message: "constraint without operator".into(),
                })
            }
        };
        let mut j = j + 1;
        let mut sign = 1.0;
        while let Some((Tok::Sign(s), _)) = constraint_toks.get(j) {
            sign *= s;
            j += 1;
        }
        let rhs = match constraint_toks.get(j) {
            Some((Tok::Num(v), _)) => sign * v,
            _ => {
                return Err(Error::ModelParse {
                    line,
                    message: "constraint without right-hand side".into(),
                })
            }
        };
        constraints.push(LinearConstraint {
            name: label.unwrap_or_else(|| format!("R{}", constraints.len() + 1)),
            terms,
            sense,
            rhs,
        });
        k = j + 1;
    }
    Ok(LpModel {
        maximize,
        objective_name: objective_name.unwrap_or_else(|| "obj".into()),
        objective,
        constraints,
        binaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delivery::delivery_bound;
    use crate::topology::{NetworkParams, Point};

    fn tiny() -> (NetworkInstance, PopularityModel, DelayBoundTable) {
        let params = NetworkParams {
            num_channels: 1,
            file_count: 2,
            ..NetworkParams::default()
        };
        let inst = NetworkInstance::from_positions(
            params,
            &[Point::new(20.0, 0.0)],
            &[Point::new(40.0, 10.0), Point::new(-30.0, 5.0)],
        )
        .unwrap();
        let pop = PopularityModel::with_default_classes(3, 2, 2, 0.8, false).unwrap();
        let table = DelayBoundTable::new(&inst).unwrap();
        (inst, pop, table)
    }

    #[test]
    fn names_round_trip() {
        let names = [
            VarName::C { i: 3, f: 1 },
            VarName::Rho { u: 0, v: 2, w: 1 },
            VarName::LambdaX {
                u: 1,
                v: 0,
                w: 2,
                f: 3,
                g: 4,
                x: 5,
                y: 6,
            },
        ];
        for v in names {
            assert_eq!(v.to_string().parse::<VarName>().unwrap(), v);
        }
        assert!("lam_1_2".parse::<VarName>().is_err());
        assert!("zz_1".parse::<VarName>().is_err());
    }

    #[test]
    fn written_model_parses_back() {
        let (inst, pop, table) = tiny();
        let model = build_ilp(&inst, &pop, &table, &IlpOptions::default()).unwrap();
        let back = LpModel::parse(&model.to_lp_string()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn product_constraints_accept_only_the_product() {
        let z = VarName::Pair { u: 0, v: 1, w: 0 };
        let cons = definition_constraints(
            z,
            (
                Lit::Pos(VarName::R { u: 0, w: 0 }),
                Some(Lit::Neg(VarName::R { u: 1, w: 0 })),
            ),
        );
        let model = LpModel {
            maximize: true,
            objective_name: "o".into(),
            objective: vec![],
            constraints: cons,
            binaries: vec![],
        };
        for a in 0..2 {
            for b in 0..2 {
                for zv in 0..2 {
                    let vals: HashMap<String, f64> = [("rr_0_1_0", zv), ("r_0_0", a), ("r_1_0", b)]
                        .into_iter()
                        .map(|(k, v)| (k.to_string(), v as f64))
                        .collect();
                    let ok = model.check(&vals, 1e-9).is_feasible();
                    assert_eq!(ok, zv == a * (1 - b), "a={a} b={b} z={zv}");
                }
            }
        }
    }

    #[test]
    fn delay_rows_reproduce_the_bound() {
        let (inst, pop, table) = tiny();
        let model = build_ilp(&inst, &pop, &table, &IlpOptions::default()).unwrap();
        let a = Assignment::from_parts(&inst, &[Some(1), None], &[0, 0]).unwrap();
        let vals = assignment_values(&model, &inst, &a).unwrap();
        for u in 0..inst.num_ue {
            for f in 0..inst.num_files() {
                let g = delivery_bound(&inst, &a, &pop, &table, u, f).unwrap();
                let Some(row) = model.constraints.iter().find(|c| c.name == format!("delay_{u}_{f}")) else {
                    continue;
                };
                let x = format!("x_{u}_{f}");
                let lhs: f64 = row
                    .terms
                    .iter()
                    .filter(|(n, _)| *n != x)
                    .map(|(n, c)| c * vals[n])
                    .sum();
                assert!((lhs - g).abs() <= 1e-9 * (1.0 + g), "{lhs} vs {g}");
            }
        }
    }

    #[test]
    fn cap_is_enforced() {
        let (inst, pop, table) = tiny();
        let opts = IlpOptions { max_variables: 10 };
        assert!(matches!(
            build_ilp(&inst, &pop, &table, &opts),
            Err(Error::ModelTooLarge { .. })
        ));
    }

    #[test]
    fn parser_reports_line_numbers() {
        let err = LpModel::parse("Maximize\n obj: x\nSubject To\n c1: x + y\nEnd\n").unwrap_err();
        assert!(matches!(err, Error::ModelParse { line: 4, .. }), "{err}");
        let m = LpModel::parse("max\n obj: 2 a - 3.5e-1 b\nst\n a + b <= 1\n -a >= -1\nbin\n a b\nend\n").unwrap();
        assert_eq!(m.objective, vec![("a".into(), 2.0), ("b".into(), -0.35)]);
        assert_eq!(m.constraints[1].terms, vec![("a".to_string(), -1.0)]);
        assert_eq!(m.constraints[1].rhs, -1.0);
    }
}
