//! Plain-text run configuration.
//!
//! ```text
//! seed = 7
//!
//! [model]
//! m = 1
//! p = 3
//! d = 1
//!
//! [grid]
//! length = 160
//! points = 2048
//!
//! [integrator]
//! dt = 0.005
//! dealias = false
//!
//! [soliton]
//! omega = 0.8
//! v = -0.4
//!
//! [soliton]
//! omega = 0.8
//! v = 0.4
//!
//! [experiment]
//! Tn = 40
//! T0 = 10
//! diag_stride = 20
//! ```
//!
//! `#` starts a comment. Keys outside any section are global; `seed` is the
//! only one. Every semantic violation is collected before reporting.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::experiments::MultiSolitonConfig;
use crate::params::{ModelParams, SolitonParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub length: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub dealias: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentSpec {
    pub t_final: Option<f64>,
    pub t_initial: Option<f64>,
    pub diag_stride: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub alpha_ref: Option<f64>,
    pub tube_radius: Option<f64>,
    pub fit_start: Option<f64>,
    pub fit_end: Option<f64>,
    /// `‖·‖_{H¹×L²}` of the seeded perturbation for forward runs.
    pub perturbation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub integrator: Option<IntegratorSpec>,
    /// In file order.
    pub solitons: Vec<SolitonParams>,
    pub experiment: Option<ExperimentSpec>,
    pub seed: u64,
    /// Non-fatal findings such as solitons outside the stability window.
    pub warnings: Vec<String>,
}

impl RunConfig {
    /// Stability-window membership per soliton.
    pub fn stability_flags(&self) -> Vec<bool> {
        self.solitons.iter().map(SolitonParams::is_stable).collect()
    }

    /// `α̃` of the direction selection; one on a line.
    pub fn direction_alpha(&self) -> f64 {
        let v: Vec<f64> = self.solitons.iter().map(|s| s.v).collect();
        let mut alpha = 1.0f64;
        for j in 0..v.len() {
            for k in j + 1..v.len() {
                let d = v[k] - v[j];
                if d != 0.0 {
                    // Projection on the unit axis e₁ = 1.
                    alpha = alpha.min(d.abs() / d.abs());
                }
            }
        }
        alpha
    }

    /// The multi-soliton experiment this configuration describes.
    pub fn multisoliton(&self) -> Result<MultiSolitonConfig> {
        let ex = self.experiment.clone().unwrap_or_default();
        let integ = self.integrator.ok_or_else(|| Error::Config(vec!["[integrator]: dt is required".into()]))?;
        let (Some(tn), Some(t0)) = (ex.t_final, ex.t_initial) else {
            return Err(Error::Config(vec!["[experiment]: Tn and T0 are required".into()]));
        };
        let mut cfg = MultiSolitonConfig {
            model: self.model,
            solitons: self.solitons.clone(),
            t_final: tn,
            t_initial: t0,
            dt: integ.dt.abs(),
            alpha_ref: ex.alpha_ref.unwrap_or(1.0 / 24.0),
            length: self.grid.length,
            points: self.grid.points,
            diag_stride: ex.diag_stride.unwrap_or(((0.1 / integ.dt.abs()).round() as usize).max(1)),
            dealias: integ.dealias,
            tube_radius: ex.tube_radius.unwrap_or(0.1),
            fit_window: None,
        };
        cfg.solitons.sort_by(|a, b| a.v.total_cmp(&b.v));
        if let (Some(a), Some(b)) = (ex.fit_start, ex.fit_end) {
            cfg.fit_window = Some((a, b));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fully resolved text form; parses back to an equal configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}\n", self.seed);
        let _ = writeln!(s, "[model]\nm = {}\np = {}\nd = {}\n", self.model.m, self.model.p, self.model.d);
        let _ = writeln!(s, "[grid]\nlength = {}\npoints = {}\n", self.grid.length, self.grid.points);
        if let Some(i) = self.integrator {
            let _ = writeln!(s, "[integrator]\ndt = {}\ndealias = {}\n", i.dt, i.dealias);
        }
        for (j, sp) in self.solitons.iter().enumerate() {
            let flag = if sp.is_stable() { "inside" } else { "outside" };
            let _ = writeln!(s, "# soliton {}: {flag} the stability window", j + 1);
            let _ = writeln!(s, "[soliton]\nomega = {}\ntheta = {}\nv = {}\nx0 = {}\n", sp.omega, sp.theta, sp.v, sp.x0);
        }
        if let Some(ex) = &self.experiment {
            s.push_str("[experiment]\n");
            let mut opt = |k: &str, v: Option<String>| {
                if let Some(v) = v {
                    let _ = writeln!(s, "{k} = {v}");
                }
            };
            opt("Tn", ex.t_final.map(|x| x.to_string()));
            opt("T0", ex.t_initial.map(|x| x.to_string()));
            opt("diag_stride", ex.diag_stride.map(|x| x.to_string()));
            opt("out_dir", ex.out_dir.as_ref().map(|p| p.display().to_string()));
            opt("alpha_ref", ex.alpha_ref.map(|x| x.to_string()));
            opt("tube_radius", ex.tube_radius.map(|x| x.to_string()));
            opt("fit_start", ex.fit_start.map(|x| x.to_string()));
            opt("fit_end", ex.fit_end.map(|x| x.to_string()));
            opt("perturbation", ex.perturbation.map(|x| x.to_string()));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Section {
    Global,
    Model,
    Grid,
    Integrator,
    Soliton,
    Experiment,
}

impl Section {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "model" => Section::Model,
            "grid" => Section::Grid,
            "integrator" => Section::Integrator,
            "soliton" => Section::Soliton,
            "experiment" => Section::Experiment,
            _ => return None,
        })
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Section::Global => &["seed"],
            Section::Model => &["m", "p", "d"],
            Section::Grid => &["length", "points"],
            Section::Integrator => &["dt", "dealias"],
            Section::Soliton => &["omega", "theta", "v", "x0"],
            Section::Experiment => &[
                "Tn",
                "T0",
                "diag_stride",
                "out_dir",
                "alpha_ref",
                "tube_radius",
                "fit_start",
                "fit_end",
                "perturbation",
            ],
        }
    }
}

/// One section instance: key → (value, line).
type Block = HashMap<String, (String, usize)>;

fn tokenize(text: &str) -> Result<Vec<(Section, usize, Block)>> {
    let mut blocks = vec![(Section::Global, 0, Block::new())];
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Syntax { line: line_no, message: format!("unterminated section header `{line}`") })?
                .trim();
            let section = Section::parse(name)
                .ok_or_else(|| Error::Syntax { line: line_no, message: format!("unknown section `[{name}]`") })?;
            if section != Section::Soliton && blocks.iter().any(|(s, _, _)| *s == section) {
                return Err(Error::Syntax { line: line_no, message: format!("section `[{name}]` repeated") });
            }
            blocks.push((section, line_no, Block::new()));
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Syntax { line: line_no, message: format!("expected `key = value`, found `{line}`") })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::Syntax { line: line_no, message: "empty key or value".into() });
        }
        let (section, _, block) = blocks.last_mut().expect("global block");
        if !section.keys().contains(&key) {
            return Err(Error::Syntax { line: line_no, message: format!("unknown key `{key}` in this section") });
        }
        if block.insert(key.to_string(), (value.to_string(), line_no)).is_some() {
            return Err(Error::Syntax { line: line_no, message: format!("duplicate key `{key}`") });
        }
    }
    Ok(blocks)
}

/// Typed field access that records problems instead of stopping.
struct Reader<'a> {
    block: &'a Block,
    where_: String,
    problems: &'a RefCell<Vec<String>>,
}

impl Reader<'_> {
    fn get<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let (raw, line) = self.block.get(key)?;
        let raw = raw.trim_matches('"');
        match raw.parse() {
            Ok(v) => Some(v),
            Err(_) => {
                self.problems.borrow_mut().push(format!("{} line {line}: `{key}` must be {what}, got `{raw}`", self.where_));
                None
            }
        }
    }

    fn real(&mut self, key: &str) -> Option<f64> {
        let v: f64 = self.get(key, "a real number")?;
        if v.is_finite() {
            Some(v)
        } else {
            let line = self.block[key].1;
            self.problems.borrow_mut().push(format!("{} line {line}: `{key}` must be finite", self.where_));
            None
        }
    }

    fn required_real(&mut self, key: &str) -> Option<f64> {
        if !self.block.contains_key(key) {
            self.problems.borrow_mut().push(format!("{}: missing required key `{key}`", self.where_));
            return None;
        }
        self.real(key)
    }
}

/// Parses and validates. Syntax errors stop at the offending line; semantic
/// violations are all collected into one [`Error::Config`].
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let blocks = tokenize(text)?;
    let problems = RefCell::new(Vec::new());
    let mut warnings = Vec::new();
    let find = |s: Section| blocks.iter().find(|(sec, _, _)| *sec == s);
    let reader = |b: &'static str, block| Reader { block, where_: b.to_string(), problems: &problems };

    let global = &blocks[0].2;
    let seed = reader("global", global).get::<u64>("seed", "a nonnegative integer").unwrap_or(0);

    let model = match find(Section::Model) {
        None => {
            problems.borrow_mut().push("[model]: section is required".into());
            None
        }
        Some((_, _, b)) => {
            let mut r = reader("[model]", b);
            let (m, p) = (r.required_real("m"), r.required_real("p"));
            let d = r.get::<u32>("d", "a positive integer").unwrap_or(1);
            match (m, p) {
                (Some(m), Some(p)) => match ModelParams::new(m, p, d) {
                    Ok(model) => Some(model),
                    Err(e) => {
                        problems.borrow_mut().push(format!("[model]: {e}"));
                        None
                    }
                },
                _ => None,
            }
        }
    };

    let grid = match find(Section::Grid) {
        None => {
            problems.borrow_mut().push("[grid]: section is required".into());
            None
        }
        Some((_, _, b)) => {
            let mut r = reader("[grid]", b);
            let length = r.required_real("length");
            let points = if b.contains_key("points") {
                r.get::<usize>("points", "a positive integer")
            } else {
                r.problems.borrow_mut().push("[grid]: missing required key `points`".into());
                None
            };
            match (length, points) {
                (Some(length), Some(points)) if length > 0.0 && points >= 4 => Some(GridSpec { length, points }),
                (Some(_), Some(_)) => {
                    problems.borrow_mut().push("[grid]: need length > 0 and points >= 4".into());
                    None
                }
                _ => None,
            }
        }
    };

    let integrator = find(Section::Integrator).and_then(|(_, _, b)| {
        let mut r = reader("[integrator]", b);
        let dt = r.required_real("dt");
        let dealias = r.get::<bool>("dealias", "true or false").unwrap_or(false);
        let dt = dt?;
        if dt == 0.0 {
            problems.borrow_mut().push("[integrator]: dt must be nonzero".into());
            return None;
        }
        if let Some(g) = grid {
            let bound = 0.5 * g.length / g.points as f64;
            if dt.abs() > bound * (1.0 + 1e-12) {
                problems.borrow_mut().push(format!("[integrator]: |dt| = {} exceeds the stability heuristic 0.5·spacing = {bound}", dt.abs()));
            }
        }
        Some(IntegratorSpec { dt, dealias })
    });

    let mut solitons = Vec::new();
    let soliton_blocks: Vec<_> = blocks.iter().filter(|(s, _, _)| *s == Section::Soliton).collect();
    for (j, (_, line, b)) in soliton_blocks.iter().enumerate() {
        let label = format!("[soliton] #{} (line {line})", j + 1);
        let mut r = Reader { block: b, where_: label.clone(), problems: &problems };
        let omega = r.required_real("omega");
        let theta = r.real("theta").unwrap_or(0.0);
        let v = r.real("v").unwrap_or(0.0);
        let x0 = r.real("x0").unwrap_or(0.0);
        let (Some(model), Some(omega)) = (model, omega) else { continue };
        match SolitonParams::new(model, omega, theta, v, x0) {
            Ok(sp) => {
                if !sp.is_stable() {
                    warnings.push(format!(
                        "{label}: (ω, v) = ({omega}, {v}) lies outside the stability window ω²/m > {}",
                        model.stability_threshold().map_or("(empty)".to_string(), |t| t.to_string())
                    ));
                }
                solitons.push(sp);
            }
            Err(Error::FrequencyOutOfRange { .. }) => {
                problems.borrow_mut().push(format!("{label}: ω = {omega} must lie in (-√m, √m) = (-{0}, {0})", model.m.sqrt()))
            }
            Err(e) => problems.borrow_mut().push(format!("{label}: {e}")),
        }
    }
    for j in 0..solitons.len() {
        for k in j + 1..solitons.len() {
            if solitons[j].v == solitons[k].v {
                problems.borrow_mut().push(format!(
                    "[soliton] #{} and #{}: equal velocities v = {} violate the distinct-velocity hypothesis v_j != v_k",
                    j + 1,
                    k + 1,
                    solitons[j].v
                ));
            }
        }
    }
    if let Some(model) = model {
        if !solitons.is_empty() || integrator.is_some() {
            if model.d != 1 {
                problems.borrow_mut().push(format!("[model]: dynamics are one-dimensional, got d = {}", model.d));
            } else if !model.is_charge_subcritical() {
                problems.borrow_mut().push(format!("[model]: p = {} must satisfy p < 1 + 4/d for the dynamics", model.p));
            }
        }
    }

    let experiment = find(Section::Experiment).map(|(_, _, b)| {
        let mut r = reader("[experiment]", b);
        let ex = ExperimentSpec {
            t_final: r.real("Tn"),
            t_initial: r.real("T0"),
            diag_stride: r.get("diag_stride", "a positive integer"),
            out_dir: b.get("out_dir").map(|(v, _)| PathBuf::from(v.trim_matches('"'))),
            alpha_ref: r.real("alpha_ref"),
            tube_radius: r.real("tube_radius"),
            fit_start: r.real("fit_start"),
            fit_end: r.real("fit_end"),
            perturbation: r.real("perturbation"),
        };
        if let Some(t0) = ex.t_initial {
            if !(t0 > 0.0) {
                problems.borrow_mut().push(format!("[experiment]: T0 must be positive, got {t0}"));
            }
        }
        if let (Some(tn), Some(t0)) = (ex.t_final, ex.t_initial) {
            if !(tn > t0) {
                problems.borrow_mut().push(format!("[experiment]: Tn = {tn} must exceed T0 = {t0}"));
            }
        }
        if ex.diag_stride == Some(0) {
            problems.borrow_mut().push("[experiment]: diag_stride must be at least 1".into());
        }
        if ex.fit_start.is_some() != ex.fit_end.is_some() {
            problems.borrow_mut().push("[experiment]: fit_start and fit_end go together".into());
        }
        if let Some(a) = ex.perturbation {
            if a < 0.0 {
                problems.borrow_mut().push("[experiment]: perturbation must be nonnegative".into());
            }
        }
        ex
    });

    let problems = problems.into_inner();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let cfg = RunConfig {
        model: model.expect("checked"),
        grid: grid.expect("checked"),
        integrator,
        solitons,
        experiment,
        seed,
        warnings,
    };
    // Cross-block invariants of a complete experiment (seam distance, step count).
    if let Some(ex) = &cfg.experiment {
        if ex.t_final.is_some() && ex.t_initial.is_some() && cfg.integrator.is_some() && !cfg.solitons.is_empty() {
            if let Err(Error::Config(v)) = cfg.multisoliton() {
                return Err(Error::Config(v));
            }
        }
    }
    for w in &cfg.warnings {
        log::warn!("{w}");
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = "seed = 3
[model]
m = 1
p = 3
d = 1
[grid]
length = 160
points = 2048
[integrator]
dt = 0.005
[soliton]
omega = 0.8
v = -0.4
[soliton]
omega = 0.8
v = 0.4   # trailing comment
[experiment]
Tn = 40
T0 = 10
";

    #[test]
    fn minimal_two_soliton() {
        let cfg = parse_config(TWO).unwrap();
        assert_eq!(cfg.solitons.len(), 2);
        assert_eq!(cfg.stability_flags(), vec![true, true]);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.direction_alpha(), 1.0);
        let ms = cfg.multisoliton().unwrap();
        assert_eq!(ms.diag_stride, 20);
    }

    #[test]
    fn resolved_text_round_trips() {
        let cfg = parse_config(TWO).unwrap();
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn equal_velocities_rejected() {
        let text = TWO.replace("v = 0.4", "v = -0.4");
        match parse_config(&text) {
            Err(Error::Config(v)) => assert!(v.iter().any(|m| m.contains("distinct-velocity"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unstable_frequency_warns() {
        let text = TWO.replace("omega = 0.8\nv = -0.4", "omega = 0.6\nv = -0.4");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.stability_flags(), vec![false, true]);
        assert_eq!(cfg.warnings.len(), 1);
    }

    #[test]
    fn all_violations_reported() {
        let text = TWO.replace("v = -0.4", "v = 1.2").replace("omega = 0.8\nv = 0.4", "omega = 1.5\nv = 0.4");
        let text = text.replace("dt = 0.005", "dt = 1");
        match parse_config(&text) {
            Err(Error::Config(v)) => {
                assert!(v.iter().any(|m| m.contains("#1") && m.contains("|v|")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("#2") && m.contains("√m")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("0.5·spacing")), "{v:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line() {
        let text = TWO.replace("points = 2048", "points 2048");
        assert!(matches!(parse_config(&text), Err(Error::Syntax { line: 8, .. })));
        assert!(matches!(parse_config("[model\nm = 1"), Err(Error::Syntax { line: 1, .. })));
        assert!(matches!(parse_config("[model]\nmass = 1"), Err(Error::Syntax { line: 2, .. })));
    }

    #[test]
    fn missing_sections() {
        match parse_config("seed = 1\n") {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
