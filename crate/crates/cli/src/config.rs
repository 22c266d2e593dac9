//! Line-oriented run configuration: `key = value` entries under the
//! sections `[domain] [params] [seed] [solve] [analysis] [output]`, with
//! `#` comments. Unknown sections or keys, duplicate keys, missing
//! required keys and malformed values are all reported with their line
//! number where one exists.

use std::collections::BTreeMap;
use std::path::PathBuf;

use gpsep::grid::Domain;
use gpsep::model::FunctionalVariant;
use gpsep::solver::SolveOptions;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct AnalysisToggles {
    pub morse: bool,
    pub pohozaev: bool,
    pub nodal: bool,
    pub decay_fit: bool,
    pub morse_tol: f64,
    pub nodal_delta_rel: f64,
    pub pohozaev_center: Option<Vec<f64>>,
    pub pohozaev_radius: Option<f64>,
}

impl Default for AnalysisToggles {
    fn default() -> Self {
        AnalysisToggles {
            morse: false,
            pohozaev: false,
            nodal: false,
            decay_fit: false,
            morse_tol: gpsep::analysis::DEFAULT_MORSE_TOL_REL,
            nodal_delta_rel: gpsep::analysis::DEFAULT_NODAL_DELTA_REL,
            pohozaev_center: None,
            pohozaev_radius: None,
        }
    }
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: Domain,
    pub lambda: f64,
    pub mu: f64,
    /// One beta for `solve`; an ascending schedule for `continue`.
    pub betas: Vec<f64>,
    pub eps: f64,
    pub r_trunc: f64,
    pub variant: FunctionalVariant,
    pub k: usize,
    pub mix: Option<Vec<f64>>,
    pub amplitude: Option<f64>,
    pub rng_seed: u64,
    pub rho: f64,
    pub samples: usize,
    pub solve: SolveOptions,
    pub analysis: AnalysisToggles,
    pub out_dir: PathBuf,
}

const SECTIONS: [&str; 6] = ["domain", "params", "seed", "solve", "analysis", "output"];

const KNOWN_KEYS: [(&str, &[&str]); 6] = [
    ("domain", &["dim", "L", "n"]),
    ("params", &["lambda", "mu", "beta", "eps", "R", "variant"]),
    ("seed", &["k", "mix", "amplitude", "rng_seed", "rho", "samples"]),
    (
        "solve",
        &[
            "grad_tol",
            "descent_tol",
            "max_descent_iters",
            "max_newton_iters",
            "armijo_c",
            "armijo_shrink",
            "deflation_power",
            "deflation_shift",
        ],
    ),
    (
        "analysis",
        &[
            "morse",
            "pohozaev",
            "nodal",
            "decay_fit",
            "morse_tol",
            "nodal_delta_rel",
            "pohozaev_center",
            "pohozaev_radius",
        ],
    ),
    ("output", &["dir"]),
];

struct RawEntry {
    value: String,
    line: usize,
}

struct RawConfig {
    entries: BTreeMap<(String, String), RawEntry>,
}

impl RawConfig {
    fn get(&self, section: &str, key: &str) -> Option<&RawEntry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn parse_with<T>(
        &self,
        section: &str,
        key: &str,
        f: impl Fn(&str) -> Option<T>,
        what: &str,
    ) -> Result<Option<T>, CliError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(entry) => match f(&entry.value) {
                Some(v) => Ok(Some(v)),
                None => Err(CliError::Config(format!(
                    "line {}: [{section}] {key} = {:?} is not {what}",
                    entry.line, entry.value
                ))),
            },
        }
    }

    fn require<T>(
        &self,
        section: &str,
        key: &str,
        f: impl Fn(&str) -> Option<T>,
        what: &str,
    ) -> Result<T, CliError> {
        self.parse_with(section, key, f, what)?.ok_or_else(|| {
            CliError::Config(format!("missing required key [{section}] {key}"))
        })
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "inf" | "infinity" => Some(f64::INFINITY),
        _ => s.parse().ok(),
    }
}

fn parse_f64_list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|p| parse_f64(p.trim())).collect()
}

fn parse_usize(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn parse_u64(s: &str) -> Option<u64> {
    s.parse().ok()
}

fn parse_usize_list(s: &str) -> Option<Vec<usize>> {
    s.split(',').map(|p| p.trim().parse().ok()).collect()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn tokenize(text: &str) -> Result<RawConfig, CliError> {
    let mut entries = BTreeMap::new();
    let mut section: Option<String> = None;
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let Some(name) = name.strip_suffix(']') else {
                return Err(CliError::Config(format!("line {line_no}: malformed section header")));
            };
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(CliError::Config(format!("line {line_no}: unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {line_no}: expected `key = value`, got {line:?}"
            )));
        };
        let key = key.trim();
        let value = value.trim();
        let Some(ref section) = section else {
            return Err(CliError::Config(format!(
                "line {line_no}: key {key:?} appears before any section header"
            )));
        };
        let allowed = KNOWN_KEYS
            .iter()
            .find(|(s, _)| s == section)
            .map(|(_, keys)| *keys)
            .unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(CliError::Config(format!(
                "line {line_no}: unknown key {key:?} in section [{section}]"
            )));
        }
        let id = (section.clone(), key.to_string());
        if let Some(prev) = entries.get(&id) {
            let RawEntry { line: prev_line, .. } = prev;
            return Err(CliError::Config(format!(
                "line {line_no}: duplicate key {key:?} in [{section}] (first set on line {prev_line})"
            )));
        }
        entries.insert(id, RawEntry { value: value.to_string(), line: line_no });
    }
    Ok(RawConfig { entries })
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let raw = tokenize(text)?;
    let dim = raw.require("domain", "dim", parse_usize, "an integer")?;
    let lengths = raw.require("domain", "L", parse_f64_list, "a number or comma list")?;
    let nodes = raw.require("domain", "n", parse_usize_list, "an integer or comma list")?;
    if lengths.len() != dim || nodes.len() != dim {
        return Err(CliError::Config(format!(
            "[domain] expects {dim} entries for L and n, got {} and {}",
            lengths.len(),
            nodes.len()
        )));
    }
    let domain = Domain::new(&lengths, &nodes).map_err(CliError::Core)?;

    let lambda = raw.require("params", "lambda", parse_f64, "a number")?;
    let mu = raw.require("params", "mu", parse_f64, "a number")?;
    let betas = raw.require("params", "beta", parse_f64_list, "a number or comma list")?;
    if betas.is_empty() || betas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config("[params] beta schedule must be strictly ascending".into()));
    }
    let eps = raw.parse_with("params", "eps", parse_f64, "a number")?.unwrap_or(0.0);
    let r_trunc = raw.parse_with("params", "R", parse_f64, "a number or inf")?
        .unwrap_or(f64::INFINITY);
    let variant = match raw.get("params", "variant") {
        None => FunctionalVariant::Plain,
        Some(e) => match e.value.as_str() {
            "plain" => FunctionalVariant::Plain,
            "truncated" => FunctionalVariant::Truncated,
            other => {
                return Err(CliError::Config(format!(
                    "line {}: variant must be plain or truncated, got {other:?}",
                    e.line
                )))
            }
        },
    };
    if variant == FunctionalVariant::Truncated && (lambda != -1.0 || mu != -1.0) {
        return Err(CliError::Config(
            "the truncated variant is normalized to lambda = mu = -1".into(),
        ));
    }

    let k = raw.require("seed", "k", parse_usize, "an integer")?;
    let mix = raw.parse_with("seed", "mix", parse_f64_list, "a comma list of numbers")?;
    if let Some(ref m) = mix {
        if m.len() != k {
            return Err(CliError::Config(format!(
                "[seed] mix must have k = {k} coefficients, got {}",
                m.len()
            )));
        }
    }
    let amplitude = raw.parse_with("seed", "amplitude", parse_f64, "a number")?;
    let rng_seed = raw.parse_with("seed", "rng_seed", parse_u64, "an integer")?.unwrap_or(0);
    let rho = raw.parse_with("seed", "rho", parse_f64, "a number")?.unwrap_or(5.0);
    let samples = raw.parse_with("seed", "samples", parse_usize, "an integer")?.unwrap_or(200);

    let mut solve = SolveOptions::default();
    if let Some(v) = raw.parse_with("solve", "grad_tol", parse_f64, "a number")? {
        solve.grad_tol = v;
    }
    if let Some(v) = raw.parse_with("solve", "descent_tol", parse_f64, "a number")? {
        solve.descent_tol = v;
    }
    if let Some(v) = raw.parse_with("solve", "max_descent_iters", parse_usize, "an integer")? {
        solve.max_descent_iters = v;
    }
    if let Some(v) = raw.parse_with("solve", "max_newton_iters", parse_usize, "an integer")? {
        solve.max_newton_iters = v;
    }
    if let Some(v) = raw.parse_with("solve", "armijo_c", parse_f64, "a number")? {
        solve.armijo_c = v;
    }
    if let Some(v) = raw.parse_with("solve", "armijo_shrink", parse_f64, "a number")? {
        solve.armijo_shrink = v;
    }
    if let Some(v) = raw.parse_with("solve", "deflation_power", parse_f64, "a number")? {
        solve.deflation_power = v;
    }
    if let Some(v) = raw.parse_with("solve", "deflation_shift", parse_f64, "a number")? {
        solve.deflation_shift = v;
    }
    solve.validate().map_err(CliError::Core)?;

    let mut analysis = AnalysisToggles::default();
    if let Some(v) = raw.parse_with("analysis", "morse", parse_bool, "a boolean")? {
        analysis.morse = v;
    }
    if let Some(v) = raw.parse_with("analysis", "pohozaev", parse_bool, "a boolean")? {
        analysis.pohozaev = v;
    }
    if let Some(v) = raw.parse_with("analysis", "nodal", parse_bool, "a boolean")? {
        analysis.nodal = v;
    }
    if let Some(v) = raw.parse_with("analysis", "decay_fit", parse_bool, "a boolean")? {
        analysis.decay_fit = v;
    }
    if let Some(v) = raw.parse_with("analysis", "morse_tol", parse_f64, "a number")? {
        if !(v > 0.0) {
            return Err(CliError::Config("[analysis] morse_tol must be positive".into()));
        }
        analysis.morse_tol = v;
    }
    if let Some(v) = raw.parse_with("analysis", "nodal_delta_rel", parse_f64, "a number")? {
        if !(v > 0.0) {
            return Err(CliError::Config("[analysis] nodal_delta_rel must be positive".into()));
        }
        analysis.nodal_delta_rel = v;
    }
    analysis.pohozaev_center =
        raw.parse_with("analysis", "pohozaev_center", parse_f64_list, "a comma list")?;
    if let Some(ref c) = analysis.pohozaev_center {
        if c.len() != dim {
            return Err(CliError::Config(format!(
                "[analysis] pohozaev_center must have {dim} entries, got {}",
                c.len()
            )));
        }
    }
    analysis.pohozaev_radius =
        raw.parse_with("analysis", "pohozaev_radius", parse_f64, "a number")?;
    if let Some(r) = analysis.pohozaev_radius {
        if !(r > 0.0) {
            return Err(CliError::Config("[analysis] pohozaev_radius must be positive".into()));
        }
    }

    let out_dir = raw
        .get("output", "dir")
        .map(|e| PathBuf::from(&e.value))
        .unwrap_or_else(|| PathBuf::from("."));

    Ok(RunConfig {
        domain,
        lambda,
        mu,
        betas,
        eps,
        r_trunc,
        variant,
        k,
        mix,
        amplitude,
        rng_seed,
        rho,
        samples,
        solve,
        analysis,
        out_dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[domain]
dim = 1
L = 3.14159265358979
n = 128

[params]
lambda = -1
mu = -1
beta = 50

[seed]
k = 2
";

    #[test]
    fn minimal_config_parses() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.domain.dim(), 1);
        assert_eq!(cfg.domain.nodes()[0], 128);
        assert_eq!(cfg.betas, vec![50.0]);
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.variant, FunctionalVariant::Plain);
        assert!(cfg.mix.is_none());
        assert_eq!(cfg.rng_seed, 0);
    }

    #[test]
    fn non_numeric_value_names_its_line() {
        let text = MINIMAL.replace("beta = 50", "beta = fifty");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("line 9"), "{err}");
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = format!("{MINIMAL}\n[params]\nbeta = 60\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{MINIMAL}\nwhatever = 3\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
    }

    #[test]
    fn missing_required_key_rejected() {
        let text = MINIMAL.replace("lambda = -1\n", "");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("lambda"), "{err}");
    }

    #[test]
    fn descending_schedule_rejected() {
        let text = MINIMAL.replace("beta = 50", "beta = 50,40");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn comments_and_2d_lists() {
        let text = "\
# a run
[domain]
dim = 2   # two dimensional
L = 3.14159,3.14159
n = 15,17

[params]
lambda = -1
mu = -1
beta = 50,100

[seed]
k = 2
mix = 0,1

[output]
dir = results
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.domain.dim(), 2);
        assert_eq!(cfg.domain.nodes(), &[15, 17]);
        assert_eq!(cfg.betas.len(), 2);
        assert_eq!(cfg.mix.as_deref(), Some(&[0.0, 1.0][..]));
        assert_eq!(cfg.out_dir, PathBuf::from("results"));
    }

    #[test]
    fn truncated_variant_requires_normalized_coefficients() {
        let ok = MINIMAL.replace("beta = 50", "beta = 50\nvariant = truncated");
        assert!(parse_config(&ok).is_ok());
        let bad = ok.replace("mu = -1", "mu = -2");
        let err = parse_config(&bad).unwrap_err();
        assert!(err.to_string().contains("normalized"), "{err}");
    }
}
