//! INI-style run configuration.
//!
//! ```text
//! [phi]
//! name = model-gamma
//! gamma = 2
//! dimension = 5
//!
//! [reaction]
//! f = 0.25 * s
//!
//! [source]
//! h = 0.1
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Unknown
//! sections and keys are errors, reported with their line number.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use orlicz_core::checks::CheckConfig;
use orlicz_core::expr::{Expr, Var};
use orlicz_core::mesh::{Mesh, MeshError};
use orlicz_core::nfunction::NFunction;
use orlicz_core::registry::{custom_spec, BuildError, BuiltinPhi};
use orlicz_core::solver::{self, CriticalForm, Init, ProblemSpec, Reaction, SolverParams};
use thiserror::Error;

/// A config problem; `line` is 1-based, or 0 when a required entry is missing.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("phi", &["name", "c", "p", "gamma", "expr", "potential", "t_max", "dimension"]),
    ("reaction", &["f", "F", "A_inf", "A", "B", "a", "b", "form", "ell"]),
    ("source", &["h"]),
    ("mesh", &["nx", "ny", "width", "height"]),
    (
        "solver",
        &[
            "tol",
            "max_iter",
            "seed",
            "memory",
            "init",
            "energy_floor",
            "epsilon",
            "coercivity_samples",
            "coercivity_steps",
        ],
    ),
    ("check", &["samples", "field_samples", "mesh_cells", "embedding_p"]),
    ("output", &["dir"]),
];

/// A value together with the line it came from.
#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

type Raw = BTreeMap<(String, String), Entry>;

fn lex(text: &str) -> Result<Raw, ConfigError> {
    let mut raw = Raw::new();
    let mut section: Option<&str> = None;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(n, "section header is missing ']'"))?
                .trim();
            let known = SECTIONS
                .iter()
                .find(|(s, _)| *s == name)
                .ok_or_else(|| err(n, format!("unknown section [{name}]")))?;
            section = Some(known.0);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(n, format!("expected 'key = value', found '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| err(n, format!("key '{key}' appears before any section")))?;
        let keys = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !keys.contains(&key) {
            return Err(err(n, format!("unknown key '{key}' in [{sec}]")));
        }
        if value.is_empty() {
            return Err(err(n, format!("key '{key}' has an empty value")));
        }
        let slot = (sec.to_string(), key.to_string());
        if let Some(prev) = raw.get(&slot) {
            return Err(err(n, format!("duplicate key '{key}' (first set on line {})", prev.line)));
        }
        raw.insert(
            slot,
            Entry {
                line: n,
                value: value.to_string(),
            },
        );
    }
    Ok(raw)
}

struct Reader {
    raw: Raw,
}

impl Reader {
    fn entry(&self, sec: &str, key: &str) -> Option<&Entry> {
        self.raw.get(&(sec.to_string(), key.to_string()))
    }

    fn line(&self, sec: &str, key: &str) -> usize {
        self.entry(sec, key).map_or(0, |e| e.line)
    }

    fn parsed<T: FromStr>(&self, sec: &str, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        self.entry(sec, key)
            .map(|e| {
                e.value
                    .parse()
                    .map_err(|_| err(e.line, format!("{key} must be {what}, got '{}'", e.value)))
            })
            .transpose()
    }

    fn real(&self, sec: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.parsed(sec, key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(err(self.line(sec, key), format!("{key} must be finite"))),
            _ => Ok(v),
        }
    }

    fn positive(&self, sec: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.real(sec, key)? {
            Some(x) if x <= 0.0 => Err(err(self.line(sec, key), format!("{key} must be positive"))),
            v => Ok(v),
        }
    }

    fn count(&self, sec: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parsed(sec, key, "a nonnegative integer")
    }

    fn expr(&self, sec: &str, key: &str, vars: &[Var]) -> Result<Option<Expr>, ConfigError> {
        self.entry(sec, key)
            .map(|e| Expr::parse(&e.value, vars).map_err(|pe| err(e.line, format!("{key}: {pe}"))))
            .transpose()
    }

    fn text(&self, sec: &str, key: &str) -> Option<String> {
        self.entry(sec, key).map(|e| e.value.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhiChoice {
    Builtin(BuiltinPhi),
    Expression { phi: Expr, potential: Option<Expr> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhiConfig {
    pub choice: PhiChoice,
    pub t_max: Option<f64>,
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionConfig {
    pub f: Option<Expr>,
    pub potential: Option<Expr>,
    pub a_infinity: Option<Expr>,
    pub big_a: Option<f64>,
    pub big_b: Option<Expr>,
    pub small_a: Option<f64>,
    pub small_b: Option<Expr>,
    pub form: CriticalForm,
    pub ell: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub memory: usize,
    pub init: Init,
    pub energy_floor: f64,
    pub epsilon: f64,
    pub coercivity_samples: usize,
    pub coercivity_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckSection {
    pub samples: usize,
    pub field_samples: usize,
    pub mesh_cells: usize,
    pub embedding_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub phi: PhiConfig,
    pub reaction: ReactionConfig,
    pub source: Expr,
    pub mesh: MeshConfig,
    pub solver: SolverConfig,
    pub check: CheckSection,
    pub output_dir: Option<String>,
}

const XY: &[Var] = &[Var::X, Var::Y];
const XYS: &[Var] = &[Var::X, Var::Y, Var::S];

fn parse_phi(r: &Reader) -> Result<PhiConfig, ConfigError> {
    let params = ["c", "p", "gamma"];
    let choice = match (r.entry("phi", "name"), r.entry("phi", "expr")) {
        (Some(_), Some(e)) => return Err(err(e.line, "set either name or expr in [phi], not both")),
        (None, None) => return Err(err(0, "[phi] needs a name or an expr")),
        (Some(name), None) => {
            if let Some(e) = r.entry("phi", "potential") {
                return Err(err(e.line, "potential is only allowed with expr"));
            }
            let wanted = match name.value.as_str() {
                "linear" => "c",
                "power" | "log-power" => "p",
                "model-gamma" => "gamma",
                other => {
                    return Err(err(
                        name.line,
                        format!("unknown phi '{other}'; expected one of {}", BuiltinPhi::NAMES.join(", ")),
                    ))
                }
            };
            for key in params.iter().filter(|k| **k != wanted) {
                if let Some(e) = r.entry("phi", key) {
                    return Err(err(e.line, format!("'{key}' is not a parameter of {}", name.value)));
                }
            }
            let value = r
                .real("phi", wanted)?
                .ok_or_else(|| err(name.line, format!("{} needs parameter '{wanted}'", name.value)))?;
            let b = BuiltinPhi::from_name(&name.value, Some(value)).map_err(|e| err(name.line, e.to_string()))?;
            b.spec().map_err(|e| err(r.line("phi", wanted), e.to_string()))?;
            PhiChoice::Builtin(b)
        }
        (None, Some(_)) => {
            for key in params {
                if let Some(e) = r.entry("phi", key) {
                    return Err(err(e.line, format!("'{key}' is only used with a built-in name")));
                }
            }
            PhiChoice::Expression {
                phi: r.expr("phi", "expr", &[Var::T])?.expect("checked above"),
                potential: r.expr("phi", "potential", &[Var::T])?,
            }
        }
    };
    let dimension = r.count("phi", "dimension")?;
    if let Some(d) = dimension {
        if d < 2 {
            return Err(err(r.line("phi", "dimension"), "dimension must be at least 2"));
        }
    }
    Ok(PhiConfig {
        choice,
        t_max: r.positive("phi", "t_max")?,
        dimension,
    })
}

fn parse_reaction(r: &Reader) -> Result<ReactionConfig, ConfigError> {
    let f = r.expr("reaction", "f", XYS)?;
    let potential = r.expr("reaction", "F", XYS)?;
    if f.is_none() && potential.is_some() {
        return Err(err(r.line("reaction", "F"), "F given without f"));
    }
    let nonneg = |key: &str| -> Result<Option<f64>, ConfigError> {
        match r.real("reaction", key)? {
            Some(x) if x < 0.0 => Err(err(r.line("reaction", key), format!("{key} must be >= 0"))),
            v => Ok(v),
        }
    };
    let big_a = nonneg("A")?;
    let small_a = nonneg("a")?;
    if big_a.is_none() {
        if let Some(e) = r.entry("reaction", "B") {
            return Err(err(e.line, "B given without A"));
        }
    }
    if small_a.is_none() {
        for key in ["b", "form"] {
            if let Some(e) = r.entry("reaction", key) {
                return Err(err(e.line, format!("{key} given without a")));
            }
        }
    }
    let form = match r.entry("reaction", "form") {
        None => CriticalForm::Strong,
        Some(e) => match e.value.as_str() {
            "strong" => CriticalForm::Strong,
            "weak" => CriticalForm::Weak,
            other => return Err(err(e.line, format!("form must be 'strong' or 'weak', got '{other}'"))),
        },
    };
    Ok(ReactionConfig {
        f,
        potential,
        a_infinity: r.expr("reaction", "A_inf", XY)?,
        big_a,
        big_b: r.expr("reaction", "B", XY)?,
        small_a,
        small_b: r.expr("reaction", "b", XY)?,
        form,
        ell: r.positive("reaction", "ell")?,
    })
}

fn parse_solver(r: &Reader) -> Result<SolverConfig, ConfigError> {
    let d = SolverParams::default();
    let init = match r.entry("solver", "init") {
        None => Init::Zero,
        Some(e) => match e.value.as_str() {
            "zero" => Init::Zero,
            "random" => Init::Random,
            other => return Err(err(e.line, format!("init must be 'zero' or 'random', got '{other}'"))),
        },
    };
    let epsilon = r.real("solver", "epsilon")?.unwrap_or(0.0);
    if epsilon < 0.0 {
        return Err(err(r.line("solver", "epsilon"), "epsilon must be >= 0"));
    }
    Ok(SolverConfig {
        tol: r.positive("solver", "tol")?.unwrap_or(d.tol),
        max_iter: r.count("solver", "max_iter")?.unwrap_or(d.max_iter),
        seed: r.parsed("solver", "seed", "a nonnegative integer")?.unwrap_or(0),
        memory: r.count("solver", "memory")?.unwrap_or(d.memory),
        init,
        energy_floor: r.real("solver", "energy_floor")?.unwrap_or(d.energy_floor),
        epsilon,
        coercivity_samples: r.count("solver", "coercivity_samples")?.unwrap_or(0),
        coercivity_steps: r.count("solver", "coercivity_steps")?.unwrap_or(d.coercivity_steps),
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let r = Reader { raw: lex(text)? };
        let cells = |key: &str| -> Result<usize, ConfigError> {
            match r.count("mesh", key)? {
                Some(0) => Err(err(r.line("mesh", key), format!("{key} must be at least 1"))),
                v => Ok(v.unwrap_or(16)),
            }
        };
        let check_default = CheckConfig::default();
        Ok(Self {
            phi: parse_phi(&r)?,
            reaction: parse_reaction(&r)?,
            source: r
                .expr("source", "h", XY)?
                .unwrap_or_else(|| Expr::parse("0", XY).expect("literal parses")),
            mesh: MeshConfig {
                nx: cells("nx")?,
                ny: cells("ny")?,
                width: r.positive("mesh", "width")?.unwrap_or(1.0),
                height: r.positive("mesh", "height")?.unwrap_or(1.0),
            },
            solver: parse_solver(&r)?,
            check: CheckSection {
                samples: r.count("check", "samples")?.unwrap_or(check_default.samples),
                field_samples: r.count("check", "field_samples")?.unwrap_or(check_default.field_samples),
                mesh_cells: r.count("check", "mesh_cells")?.unwrap_or(check_default.mesh_cells).max(1),
                embedding_p: r.positive("check", "embedding_p")?,
            },
            output_dir: r.text("output", "dir"),
        })
    }

    /// Canonical text form: every section, keys in a fixed order, defaults spelled out.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        macro_rules! kv {
            ($k:expr, $v:expr) => {
                let _ = writeln!(s, "{} = {}", $k, $v);
            };
        }
        s.push_str("[phi]\n");
        match &self.phi.choice {
            PhiChoice::Builtin(b) => {
                kv!("name", b.name());
                let (k, v) = b.parameter();
                kv!(k, v);
            }
            PhiChoice::Expression { phi, potential } => {
                kv!("expr", phi);
                if let Some(p) = potential {
                    kv!("potential", p);
                }
            }
        }
        if let Some(t) = self.phi.t_max {
            kv!("t_max", t);
        }
        if let Some(d) = self.phi.dimension {
            kv!("dimension", d);
        }

        s.push_str("\n[reaction]\n");
        let rc = &self.reaction;
        if let Some(f) = &rc.f {
            kv!("f", f);
        }
        if let Some(p) = &rc.potential {
            kv!("F", p);
        }
        if let Some(a) = &rc.a_infinity {
            kv!("A_inf", a);
        }
        if let Some(a) = rc.big_a {
            kv!("A", a);
            if let Some(b) = &rc.big_b {
                kv!("B", b);
            }
        }
        if let Some(a) = rc.small_a {
            kv!("a", a);
            if let Some(b) = &rc.small_b {
                kv!("b", b);
            }
            kv!("form", if rc.form == CriticalForm::Weak { "weak" } else { "strong" });
        }
        if let Some(l) = rc.ell {
            kv!("ell", l);
        }

        s.push_str("\n[source]\n");
        kv!("h", self.source);

        s.push_str("\n[mesh]\n");
        kv!("nx", self.mesh.nx);
        kv!("ny", self.mesh.ny);
        kv!("width", self.mesh.width);
        kv!("height", self.mesh.height);

        let sv = &self.solver;
        s.push_str("\n[solver]\n");
        kv!("tol", sv.tol);
        kv!("max_iter", sv.max_iter);
        kv!("seed", sv.seed);
        kv!("memory", sv.memory);
        kv!("init", if sv.init == Init::Random { "random" } else { "zero" });
        kv!("energy_floor", sv.energy_floor);
        kv!("epsilon", sv.epsilon);
        kv!("coercivity_samples", sv.coercivity_samples);
        kv!("coercivity_steps", sv.coercivity_steps);

        s.push_str("\n[check]\n");
        kv!("samples", self.check.samples);
        kv!("field_samples", self.check.field_samples);
        kv!("mesh_cells", self.check.mesh_cells);
        if let Some(p) = self.check.embedding_p {
            kv!("embedding_p", p);
        }

        if let Some(dir) = &self.output_dir {
            s.push_str("\n[output]\n");
            kv!("dir", dir);
        }
        s
    }

    pub fn nfunction(&self) -> Result<NFunction, BuildError> {
        let mut spec = match &self.phi.choice {
            PhiChoice::Builtin(b) => b.spec()?,
            PhiChoice::Expression { phi, potential } => {
                custom_spec(phi.source(), potential.as_ref().map(|p| p.source()))?
            }
        };
        if let Some(t) = self.phi.t_max {
            spec = spec.with_domain_hint(t);
        }
        Ok(NFunction::from_spec(spec)?)
    }

    pub fn mesh(&self) -> Result<Mesh, MeshError> {
        Mesh::rectangle(self.mesh.nx, self.mesh.ny, self.mesh.width, self.mesh.height)
    }

    pub fn reaction(&self) -> Reaction {
        let rc = &self.reaction;
        let xy_fn = |e: &Expr| -> solver::PointFn {
            let e = e.clone();
            Arc::new(move |x| e.eval_xy(x))
        };
        let mut reaction = match (&rc.f, &rc.potential) {
            (Some(f), Some(p)) => {
                let (f, p) = (f.clone(), p.clone());
                Reaction::new(move |x, s| f.eval_xs(x, s), move |x, s| p.eval_xs(x, s))
            }
            (Some(f), None) => {
                let f = f.clone();
                Reaction::from_f(move |x, s| f.eval_xs(x, s))
            }
            _ => Reaction::new(|_, _| 0.0, |_, _| 0.0),
        };
        if let Some(a) = &rc.a_infinity {
            reaction = reaction.with_a_infinity(xy_fn(a));
        } else if rc.f.is_none() {
            reaction = reaction.with_a_infinity(solver::constant(0.0));
        }
        if let Some(a) = rc.big_a {
            let b = rc.big_b.as_ref().map_or_else(|| solver::constant(0.0), xy_fn);
            reaction = reaction.with_potential_bound(a, b);
        }
        if let Some(a) = rc.small_a {
            let b = rc.small_b.as_ref().map_or_else(|| solver::constant(0.0), xy_fn);
            reaction = reaction.with_critical_bound(a, b, rc.form);
        }
        reaction
    }

    pub fn solver_params(&self) -> SolverParams {
        let sv = &self.solver;
        SolverParams {
            tol: sv.tol,
            max_iter: sv.max_iter,
            memory: sv.memory,
            init: sv.init,
            energy_floor: sv.energy_floor,
            epsilon_shift: sv.epsilon,
            coercivity_samples: sv.coercivity_samples,
            coercivity_steps: sv.coercivity_steps,
            ..SolverParams::default()
        }
    }

    pub fn problem(&self, nf: NFunction, mesh: Mesh) -> ProblemSpec {
        let h = self.source.clone();
        let mut spec = ProblemSpec::new(nf, self.reaction(), Arc::new(move |x| h.eval_xy(x)), Arc::new(mesh))
            .with_params(self.solver_params())
            .with_seed(self.solver.seed);
        if let Some(ell) = self.reaction.ell {
            spec.ell = ell;
        }
        spec
    }

    pub fn check_config(&self) -> CheckConfig {
        CheckConfig {
            samples: self.check.samples,
            field_samples: self.check.field_samples,
            seed: self.solver.seed,
            mesh_cells: self.check.mesh_cells,
            embedding_exponent: self.check.embedding_p,
            ..CheckConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const POISSON: &str = "\
# Poisson problem
[phi]
name = linear
c = 2

[source]
h = 1

[mesh]
nx = 8
ny = 8
";

    #[test]
    fn parses_minimal_config() {
        let c = RunConfig::parse(POISSON).unwrap();
        assert_eq!(c.phi.choice, PhiChoice::Builtin(BuiltinPhi::Linear { c: 2.0 }));
        assert_eq!(c.mesh.nx, 8);
        assert_eq!(c.solver.tol, 1e-8);
        assert_eq!(c.solver.max_iter, 10_000);
        assert!(c.reaction.f.is_none());
    }

    #[test]
    fn round_trip_is_idempotent() {
        let text = "\
[phi]
expr = 3 * t
potential = t^3
dimension = 4
[reaction]
f = 0.25*s*abs(s)
A_inf = 1 + x
a = 2
b = x*y
form = weak
[source]
h = sin(pi*x)
[solver]
seed = 7
init = random
[output]
dir = out
";
        let once = RunConfig::parse(text).unwrap().to_ini();
        let parsed = RunConfig::parse(&once).unwrap();
        assert_eq!(parsed, RunConfig::parse(text).unwrap());
        assert_eq!(parsed.to_ini(), once);
    }

    fn line_of(text: &str) -> usize {
        RunConfig::parse(text).unwrap_err().line
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of("[phi]\nname = linear\nc = 2\nbogus = 1\n"), 4);
        assert_eq!(line_of("[phi]\nname = linear\nc = 2\n[wat]\n"), 4);
        assert_eq!(line_of("name = linear\n"), 1);
        assert_eq!(line_of("[phi]\nname = linear\n\nc = two\n"), 4);
        assert_eq!(line_of("[phi]\nname = linear\nc = 2\nc = 3\n"), 4);
        assert_eq!(line_of("[phi]\nname = power\np = 3\n[reaction]\nf = s +* 2\n"), 5);
        assert_eq!(line_of("[phi]\nname = power\np = 0.5\n"), 3);
        assert_eq!(line_of("[phi]\nname = power\ngamma = 2\np = 3\n"), 3);
        assert_eq!(line_of("[phi]\nname = linear\nc = 2\n[source]\nh = t\n"), 5);
        assert_eq!(line_of("[phi]\nname = linear\nc = 2\n[mesh]\nnx = 0\n"), 5);
    }

    #[test]
    fn builds_problem() {
        let c = RunConfig::parse(POISSON).unwrap();
        let nf = c.nfunction().unwrap();
        let spec = c.problem(nf, c.mesh().unwrap());
        assert_eq!(spec.mesh.triangle_count(), 128);
        assert_eq!((spec.source)([0.3, 0.3]), 1.0);
        assert!((spec.ell - 2.0).abs() < 1e-6);
    }
}
