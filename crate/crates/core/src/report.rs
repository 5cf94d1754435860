//! Experiment configuration, dispatch and report emission.
//!
//! Every report carries the fully resolved [`ExperimentConfig`], so a report
//! can be replayed. JSON reports also carry a timestamp, the only field that
//! differs between replays.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::arith::{verify_keyu, KeyUParams};
use crate::density::{
    box_density, density_increment, generate_set, increment_step_bound, sub_box_density_ladder,
    uniformity_test, BoundaryMode, PointSet, SetSpec, UniformityVariant,
};
use crate::error::{Error, Result};
use crate::lattice::representation_table;
use crate::verify::{
    count_identity_check, dichotomy_report, dichotomy_report_pinned, pinned_check, unpinned_check,
    DichotomyConstants,
};
use crate::VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Enumerate,
    Expsum,
    Verify,
    Increment,
    Uniformity,
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyMode {
    Unpinned,
    Pinned,
    Dichotomy,
    DichotomyPinned,
    Identity,
}

impl FromStr for VerifyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "unpinned" => VerifyMode::Unpinned,
            "pinned" => VerifyMode::Pinned,
            "dichotomy" => VerifyMode::Dichotomy,
            "dichotomy-pinned" => VerifyMode::DichotomyPinned,
            "identity" => VerifyMode::Identity,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown verify mode {other:?} (unpinned, pinned, dichotomy, dichotomy-pinned, identity)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!(
                "unknown format {other:?} (json, csv)"
            ))),
        }
    }
}

/// Fully resolved parameters of one run. Thread count is deliberately not
/// part of it: it never changes results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub mode: Option<VerifyMode>,
    pub dim: Option<usize>,
    pub side: Option<usize>,
    pub boundary: BoundaryMode,
    pub lambda: Option<u64>,
    pub lambda0: Option<u64>,
    pub lambda1: Option<u64>,
    pub lambda_max: Option<u64>,
    pub eta: Option<f64>,
    pub epsilon: Option<f64>,
    pub c_qeta: f64,
    pub c_keyu: f64,
    pub c_branch: f64,
    pub c_exceptional: f64,
    pub q: u64,
    pub q_cap: u64,
    pub samples: usize,
    pub inside_arcs: bool,
    pub seed: u64,
    pub input: Option<String>,
    pub generator: Option<String>,
    pub max_steps: usize,
    pub subcube: Option<usize>,
    pub sides: Vec<usize>,
    pub output: Option<String>,
    pub format: Format,
}

impl ExperimentConfig {
    /// Defaults for a command; every knob is then overridable.
    pub fn new(command: Command) -> Self {
        Self {
            command,
            mode: None,
            dim: None,
            side: None,
            boundary: BoundaryMode::Periodic,
            lambda: None,
            lambda0: None,
            lambda1: None,
            lambda_max: None,
            eta: None,
            epsilon: None,
            c_qeta: 1.0,
            c_keyu: 1.0,
            c_branch: 1.0,
            c_exceptional: 1.0,
            q: 1,
            q_cap: 12,
            samples: 10_000,
            inside_arcs: false,
            seed: 0,
            input: None,
            generator: None,
            max_steps: 64,
            subcube: None,
            sides: Vec::new(),
            output: None,
            format: match command {
                Command::Enumerate => Format::Csv,
                _ => Format::Json,
            },
        }
    }

    /// Checks that the command has what it needs.
    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{what} is required for this command"
                )))
            }
        };
        if let Some(d) = self.dim {
            if d == 0 {
                return Err(Error::InvalidParameter("--dim must be >= 1".into()));
            }
        }
        if self.side == Some(0) {
            return Err(Error::InvalidParameter("--side must be >= 1".into()));
        }
        if self.q == 0 {
            return Err(Error::InvalidParameter("--q must be >= 1".into()));
        }
        for (name, v) in [
            ("--c-qeta", self.c_qeta),
            ("--c-keyu", self.c_keyu),
            ("--c-branch", self.c_branch),
            ("--c-exceptional", self.c_exceptional),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if let Some(e) = self.eta {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::InvalidParameter("--eta must be positive".into()));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::InvalidParameter("--epsilon must be positive".into()));
            }
        }
        let needs_set = matches!(
            self.command,
            Command::Verify | Command::Increment | Command::Uniformity | Command::Density
        );
        if needs_set {
            match (&self.input, &self.generator) {
                (Some(_), Some(_)) => {
                    return Err(Error::InvalidParameter(
                        "give either --in or --gen, not both".into(),
                    ))
                }
                (None, None) => {
                    return Err(Error::InvalidParameter("--in or --gen is required".into()))
                }
                (None, Some(_)) => {
                    need(self.dim.is_some(), "--dim")?;
                    need(self.side.is_some(), "--side")?;
                }
                _ => {}
            }
        }
        match self.command {
            Command::Enumerate => {
                need(self.dim.is_some(), "--dim")?;
                need(self.lambda_max.is_some(), "--lambda-max")?;
            }
            Command::Expsum => {
                need(self.dim.is_some(), "--dim")?;
                need(self.lambda.is_some(), "--lambda")?;
                need(self.eta.is_some(), "--eta")?;
            }
            Command::Verify => {
                let mode = self
                    .mode
                    .ok_or_else(|| Error::InvalidParameter("--mode is required".into()))?;
                match mode {
                    VerifyMode::Identity => need(self.lambda.is_some(), "--lambda")?,
                    VerifyMode::Unpinned => {
                        need(self.lambda.is_some(), "--lambda")?;
                        need(self.epsilon.is_some(), "--epsilon")?;
                    }
                    VerifyMode::Pinned => {
                        need(
                            self.lambda0.is_some() && self.lambda1.is_some(),
                            "--lambda0/--lambda1",
                        )?;
                        need(self.epsilon.is_some(), "--epsilon")?;
                    }
                    VerifyMode::Dichotomy => {
                        need(self.lambda.is_some(), "--lambda")?;
                        need(self.epsilon.is_some(), "--epsilon")?;
                        need(self.eta.is_some(), "--eta")?;
                    }
                    VerifyMode::DichotomyPinned => {
                        need(
                            self.lambda0.is_some() && self.lambda1.is_some(),
                            "--lambda0/--lambda1",
                        )?;
                        need(self.epsilon.is_some(), "--epsilon")?;
                        need(self.eta.is_some(), "--eta")?;
                    }
                }
            }
            Command::Increment | Command::Uniformity => need(self.eta.is_some(), "--eta")?,
            Command::Density => need(!self.sides.is_empty(), "--sides")?,
        }
        if self.format == Format::Csv
            && !matches!(self.command, Command::Enumerate | Command::Increment)
        {
            return Err(Error::InvalidParameter(
                "CSV output is available for enumerate and increment only".into(),
            ));
        }
        Ok(())
    }

    fn load_set(&self) -> Result<PointSet> {
        match (&self.input, &self.generator) {
            (Some(path), _) => {
                let file = File::open(path).map_err(|e| {
                    Error::InvalidParameter(format!("cannot open point set {path:?}: {e}"))
                })?;
                PointSet::read_text(BufReader::new(file))
            }
            (None, Some(spec)) => {
                let spec: SetSpec = spec.parse()?;
                generate_set(
                    &spec,
                    self.dim.expect("validated"),
                    self.side.expect("validated"),
                    self.boundary,
                )
            }
            (None, None) => Err(Error::InvalidParameter("--in or --gen is required".into())),
        }
    }
}

/// A rendered report.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Json(Value),
    Csv(String),
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Runs the configured experiment.
pub fn execute(cfg: &ExperimentConfig) -> Result<Output> {
    cfg.validate()?;
    match cfg.command {
        Command::Enumerate => {
            let d = cfg.dim.expect("validated");
            let table = representation_table(d, cfg.lambda_max.expect("validated"))?;
            Ok(match cfg.format {
                Format::Csv => {
                    let mut s = String::from("lambda,count\n");
                    for (l, c) in table.iter().enumerate() {
                        writeln!(s, "{l},{c}").expect("write to string");
                    }
                    Output::Csv(s)
                }
                Format::Json => Output::Json(json!({
                    "dim": d,
                    "rows": table
                        .iter()
                        .enumerate()
                        .map(|(l, c)| json!({"lambda": l, "count": c}))
                        .collect::<Vec<_>>(),
                })),
            })
        }
        Command::Expsum => {
            let report = verify_keyu(&KeyUParams {
                dim: cfg.dim.expect("validated"),
                lambda: cfg.lambda.expect("validated"),
                eta: cfg.eta.expect("validated"),
                c_keyu: cfg.c_keyu,
                q_max: cfg.q_cap,
                n_samples: cfg.samples,
                seed: cfg.seed,
                inside_arcs: cfg.inside_arcs,
            })?;
            Ok(Output::Json(to_value(&report)))
        }
        Command::Verify => {
            let set = cfg.load_set()?;
            let eps = cfg.epsilon;
            let consts = DichotomyConstants {
                c_qeta: cfg.c_qeta,
                c_branch: cfg.c_branch,
                c_exceptional: cfg.c_exceptional,
            };
            let result = match cfg.mode.expect("validated") {
                VerifyMode::Identity => {
                    to_value(&count_identity_check(&set, cfg.lambda.expect("validated"))?)
                }
                VerifyMode::Unpinned => to_value(&unpinned_check(
                    &set,
                    cfg.lambda.expect("validated"),
                    eps.expect("validated"),
                    cfg.q,
                )?),
                VerifyMode::Pinned => to_value(&pinned_check(
                    &set,
                    cfg.lambda0.expect("validated"),
                    cfg.lambda1.expect("validated"),
                    eps.expect("validated"),
                    cfg.q,
                )?),
                VerifyMode::Dichotomy => to_value(&dichotomy_report(
                    &set,
                    cfg.lambda.expect("validated"),
                    eps.expect("validated"),
                    cfg.eta.expect("validated"),
                    &consts,
                )?),
                VerifyMode::DichotomyPinned => to_value(&dichotomy_report_pinned(
                    &set,
                    cfg.lambda0.expect("validated"),
                    cfg.lambda1.expect("validated"),
                    eps.expect("validated"),
                    cfg.eta.expect("validated"),
                    &consts,
                )?),
            };
            Ok(Output::Json(json!({
                "set": set_summary(&set),
                "result": result,
            })))
        }
        Command::Increment => {
            let set = cfg.load_set()?;
            let eta = cfg.eta.expect("validated");
            let trace = density_increment(&set, eta, cfg.c_qeta, cfg.max_steps)?;
            Ok(match cfg.format {
                Format::Csv => {
                    let mut s =
                        String::from("step,side,size,density,worst_ratio,chosen_residue,status\n");
                    for (i, st) in trace.steps.iter().enumerate() {
                        let status = if i + 1 == trace.steps.len() {
                            trace.status.to_string()
                        } else {
                            "increment".to_string()
                        };
                        let residue = st
                            .chosen_residue
                            .as_ref()
                            .map(|r| r.iter().map(u64::to_string).collect::<Vec<_>>().join(" "))
                            .unwrap_or_default();
                        let ratio = st.worst_ratio.map(|r| r.to_string()).unwrap_or_default();
                        writeln!(
                            s,
                            "{},{},{},{},{},{},{}",
                            st.step, st.side, st.size, st.density, ratio, residue, status
                        )
                        .expect("write to string");
                    }
                    Output::Csv(s)
                }
                Format::Json => Output::Json(json!({
                    "set": set_summary(&set),
                    "q_eta": trace.q_eta,
                    "eta": trace.eta,
                    "status": trace.status,
                    "increments": trace.increments(),
                    "step_bound": increment_step_bound(box_density(&set), eta),
                    "steps": trace.steps,
                })),
            })
        }
        Command::Uniformity => {
            let set = cfg.load_set()?;
            let variant = match cfg.subcube {
                Some(l) => UniformityVariant::Subcube { l },
                None => UniformityVariant::Global,
            };
            let report = uniformity_test(&set, cfg.eta.expect("validated"), cfg.c_qeta, variant)?;
            Ok(Output::Json(json!({
                "set": set_summary(&set),
                "result": report,
            })))
        }
        Command::Density => {
            let set = cfg.load_set()?;
            let ladder = sub_box_density_ladder(&set, &cfg.sides)?;
            let best = ladder.iter().map(|r| r.max_density).fold(0.0, f64::max);
            Ok(Output::Json(json!({
                "set": set_summary(&set),
                "box_density": box_density(&set),
                "ladder": ladder,
                "upper_density_lower_bound": best,
            })))
        }
    }
}

fn set_summary(set: &PointSet) -> Value {
    json!({
        "dim": set.dim(),
        "side": set.side(),
        "anchor": set.anchor(),
        "boundary": set.mode(),
        "size": set.len(),
        "density": box_density(set),
    })
}

/// Seconds since the Unix epoch, or `SOURCE_DATE_EPOCH` when set.
pub fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        return t;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Final text of a report: JSON envelope with config, or CSV preceded by a
/// `#` comment line holding the config.
pub fn render(cfg: &ExperimentConfig, output: &Output, timestamp: u64) -> String {
    match output {
        Output::Json(result) => {
            let envelope = json!({
                "tool": "latdist",
                "version": VERSION,
                "config": to_value(cfg),
                "result": result,
                "timestamp": timestamp,
            });
            let mut s = serde_json::to_string_pretty(&envelope).expect("json");
            s.push('\n');
            s
        }
        Output::Csv(body) => {
            let cfg_line = serde_json::to_string(cfg).expect("json");
            format!("# latdist {VERSION} config={cfg_line}\n{body}")
        }
    }
}

/// Recovers the config from a rendered report (JSON envelope or CSV with the
/// config comment line).
pub fn config_from_report(text: &str) -> Result<ExperimentConfig> {
    let bad = |msg: String| Error::Parse { line: 1, msg };
    if let Some(rest) = text.strip_prefix("# latdist ") {
        let line = rest.lines().next().unwrap_or_default();
        let json_part = line
            .split_once("config=")
            .map(|(_, j)| j)
            .ok_or_else(|| bad("CSV report has no config line".into()))?;
        return serde_json::from_str(json_part).map_err(|e| bad(e.to_string()));
    }
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let cfg = v
        .get("config")
        .ok_or_else(|| bad("report has no config field".into()))?;
    serde_json::from_value(cfg.clone()).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerate_csv() {
        let mut cfg = ExperimentConfig::new(Command::Enumerate);
        cfg.dim = Some(5);
        cfg.lambda_max = Some(2);
        match execute(&cfg).unwrap() {
            Output::Csv(s) => assert_eq!(s, "lambda,count\n0,1\n1,10\n2,40\n"),
            other => panic!("{other:?}"),
        }
        cfg.lambda_max = Some(0);
        match execute(&cfg).unwrap() {
            Output::Csv(s) => assert_eq!(s, "lambda,count\n0,1\n"),
            other => panic!("{other:?}"),
        }
        cfg.dim = Some(0);
        assert!(execute(&cfg).unwrap_err().is_usage());
    }

    #[test]
    fn config_round_trips_through_reports() {
        let mut cfg = ExperimentConfig::new(Command::Verify);
        cfg.mode = Some(VerifyMode::Unpinned);
        cfg.generator = Some("congruence:r=2,shift=0".into());
        cfg.dim = Some(2);
        cfg.side = Some(8);
        cfg.lambda = Some(1);
        cfg.epsilon = Some(0.1);
        cfg.q = 2;
        let out = execute(&cfg).unwrap();
        let text = render(&cfg, &out, 7);
        assert_eq!(config_from_report(&text).unwrap(), cfg);

        let mut csv_cfg = ExperimentConfig::new(Command::Enumerate);
        csv_cfg.dim = Some(3);
        csv_cfg.lambda_max = Some(4);
        let text = render(&csv_cfg, &execute(&csv_cfg).unwrap(), 0);
        assert_eq!(config_from_report(&text).unwrap(), csv_cfg);
    }

    #[test]
    fn validation_messages() {
        let cfg = ExperimentConfig::new(Command::Verify);
        assert!(matches!(cfg.validate(), Err(Error::InvalidParameter(_))));
        let mut cfg = ExperimentConfig::new(Command::Expsum);
        cfg.dim = Some(5);
        cfg.lambda = Some(4);
        assert!(cfg.validate().is_err());
        cfg.eta = Some(0.5);
        assert!(cfg.validate().is_ok());
        cfg.format = Format::Csv;
        assert!(cfg.validate().is_err());
    }
}
