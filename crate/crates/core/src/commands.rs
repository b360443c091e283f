//! The `relax`, `minimax`, `sweep` and `check` commands. Every artifact
//! carries the config hash: CSV files in a leading `#` comment, snapshots in
//! a trailing `#` comment, JSON files in a top-level `config_hash` field.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::checks::{format_table, run_checks};
use crate::config::{Initial, RunConfig};
use crate::error::{Error, Result};
use crate::flows::{relax_beta, relax_infty, FlowTrace};
use crate::functionals::{energy_beta, energy_star, SignedField, StatePair};
use crate::grid::{read_snapshot, write_snapshot, Field, Grid};
use crate::minimax::{build_phi_basis, extract_critical, minimax_level, Beta, FamilyExport};
use crate::sampling::{random_equivariant_pair, random_signed_field, two_bump_pair};
use crate::sweep::{limit_point_check, run_sweep};

/// What a command produced.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// False when a check failed; maps to exit code 1.
    pub ok: bool,
    /// Human-readable summary for stdout.
    pub summary: String,
}

struct Writer<'a> {
    dir: &'a Path,
    hash: String,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(cfg: &'a RunConfig) -> Result<Self> {
        fs::create_dir_all(&cfg.out)?;
        Ok(Writer {
            dir: &cfg.out,
            hash: cfg.hash(),
            files: Vec::new(),
        })
    }

    fn header(&self) -> String {
        format!("config_hash={}", self.hash)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    fn csv(&mut self, name: &str, body: &str) -> Result<()> {
        let text = format!("# {}\n{body}", self.header());
        self.text(name, &text)
    }

    fn json(&mut self, name: &str, mut value: serde_json::Value) -> Result<()> {
        let mut obj = serde_json::Map::new();
        obj.insert("config_hash".into(), json!(self.hash));
        if let serde_json::Value::Object(m) = value.take() {
            obj.extend(m);
        }
        let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(obj))?;
        text.push('\n');
        self.text(name, &text)
    }

    fn snapshot(&mut self, name: &str, field: &Field) -> Result<()> {
        let comment = self.header();
        let mut w = self.create(name)?;
        write_snapshot(field, Some(&comment), &mut w)?;
        w.flush()?;
        Ok(())
    }

    fn pair(&mut self, prefix: &str, s: &StatePair) -> Result<()> {
        self.snapshot(&format!("{prefix}_u.snap"), s.u())?;
        self.snapshot(&format!("{prefix}_v.snap"), s.v())
    }
}

fn load_snapshot(path: &Path, grid: &Grid) -> Result<Field> {
    let f = read_snapshot(BufReader::new(File::open(path)?))?;
    if !f.grid().compatible(grid) {
        return Err(Error::Config {
            key: "snapshot".into(),
            msg: format!("{} does not match the configured grid", path.display()),
        });
    }
    Ok(f)
}

/// The named initial condition as a pair (β problem) or signed field (limit).
fn initial_pair(cfg: &RunConfig, grid: Grid) -> Result<StatePair> {
    match cfg.initial {
        Initial::TwoBump => Ok(two_bump_pair(grid)),
        Initial::RandomEquivariant => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            Ok(random_equivariant_pair(grid, &mut rng).0)
        }
        Initial::Snapshot => {
            let u = load_snapshot(cfg.snapshot.as_deref().expect("validated"), &grid)?;
            match &cfg.snapshot_v {
                Some(p) => StatePair::normalized(&u, &load_snapshot(p, &grid)?),
                None => StatePair::normalized(&u.pos_part(), &u.neg_part()),
            }
        }
    }
}

fn initial_signed(cfg: &RunConfig, grid: Grid) -> Result<SignedField> {
    match cfg.initial {
        Initial::RandomEquivariant => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            Ok(random_signed_field(grid, &mut rng))
        }
        _ => {
            let s = initial_pair(cfg, grid)?;
            SignedField::normalized(&s.difference())
        }
    }
}

fn trace_summary(trace: &FlowTrace) -> serde_json::Value {
    let last = trace.final_entry();
    json!({
        "steps": trace.accepted_steps(),
        "converged": trace.converged,
        "time": last.time,
        "energy": last.energy,
        "residual": last.residual,
        "lambda": last.lambda,
        "mu": last.mu,
    })
}

pub fn cmd_relax(cfg: &RunConfig) -> Result<Outcome> {
    let grid = cfg.grid()?;
    let flow = cfg.flow_for(cfg.beta);
    let mut out = Writer::new(cfg)?;
    let (state, trace, initial_energy) = match cfg.beta {
        Beta::Finite(b) => {
            let s0 = initial_pair(cfg, grid)?;
            let e0 = energy_beta(&s0, b);
            let (s, t) = relax_beta(&s0, b, &flow)?;
            (s, t, e0)
        }
        Beta::Infinite => {
            let w0 = initial_signed(cfg, grid)?;
            let e0 = energy_star(&w0);
            let (w, t) = relax_infty(&w0, &flow)?;
            if cfg.emit_snapshots {
                out.snapshot("relax_w.snap", w.field())?;
            }
            (w.to_pair(), t, e0)
        }
    };
    if cfg.emit_snapshots {
        out.pair("relax", &state)?;
    }
    if cfg.emit_traces {
        out.csv("relax_trace.csv", &trace.to_csv(None))?;
    }
    let mut summary = trace_summary(&trace);
    summary["beta"] = json!(cfg.beta);
    summary["initial_energy"] = json!(initial_energy);
    out.json(
        "relax.json",
        json!({ "command": "relax", "result": summary }),
    )?;
    Ok(Outcome {
        files: out.files,
        ok: true,
        summary: format!(
            "relax beta={} steps={} converged={} energy={:.12e} residual={:.3e}",
            cfg.beta,
            trace.accepted_steps(),
            trace.converged,
            trace.final_entry().energy,
            trace.final_entry().residual
        ),
    })
}

pub fn cmd_minimax(cfg: &RunConfig) -> Result<Outcome> {
    let grid = cfg.grid()?;
    let mcfg = cfg.minimax_for(cfg.beta);
    let basis = build_phi_basis(&grid, cfg.k)?;
    let (est, family) = minimax_level(cfg.k, cfg.beta, &basis, cfg.sample_size(), &mcfg)?;
    let crit = extract_critical(&est, &family, &mcfg)?;
    let (lambda, mu) = crit.lambda_mu();
    let mut out = Writer::new(cfg)?;
    out.json(
        "minimax.json",
        json!({
            "command": "minimax",
            "estimate": est,
            "critical": {
                "energy": crit.energy(),
                "residual": crit.residual(),
                "stationary": crit.is_stationary(),
                "lambda": lambda,
                "mu": mu,
            },
        }),
    )?;
    if cfg.emit_snapshots {
        out.pair("minimax", &crit.pair())?;
    }
    if cfg.emit_plots {
        out.json(
            "minimax_family.json",
            serde_json::to_value(FamilyExport::new(&est, &family)?)?,
        )?;
        let mut h = String::from("round,sup\n");
        for (i, v) in est.history.iter().enumerate() {
            writeln!(h, "{i},{v:.17e}").unwrap();
        }
        out.csv("minimax_history.csv", &h)?;
    }
    Ok(Outcome {
        files: out.files,
        ok: true,
        summary: format!(
            "minimax k={} beta={} level={:.12e} rounds={} residual={:.3e}",
            est.k,
            est.beta,
            est.value,
            est.history.len() - 1,
            est.residual
        ),
    })
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Outcome> {
    let grid = cfg.grid()?;
    let report = run_sweep(cfg.k, &cfg.betas, &grid, &cfg.sweep_config())?;
    let diag = limit_point_check(&report, cfg.limit_tol);
    let mut out = Writer::new(cfg)?;
    out.csv("sweep.csv", &report.to_csv(None))?;
    let mut body = json!({ "command": "sweep", "report": report.to_json(cfg.emit_plots)? });
    body["limit_point"] = serde_json::to_value(&diag)?;
    out.json("sweep.json", body)?;
    if cfg.emit_snapshots {
        for (r, s) in report.records.iter().zip(&report.states) {
            out.pair(&format!("sweep_beta_{}", r.beta), s)?;
        }
        if let Some(s) = &report.limit_state {
            out.pair("sweep_beta_inf", s)?;
        }
    }
    if cfg.emit_plots && grid.dim() == 1 {
        let states: Vec<(Beta, &StatePair)> = report
            .records
            .iter()
            .map(|r| r.beta)
            .zip(&report.states)
            .chain(report.limit_state.iter().map(|s| (Beta::Infinite, s)))
            .collect();
        let mut p = String::from("x");
        for (b, _) in &states {
            write!(p, ",u_{b},v_{b}").unwrap();
        }
        p.push('\n');
        for i in 0..grid.len() {
            write!(p, "{:.17e}", grid.coord(0, i)).unwrap();
            for (_, s) in &states {
                write!(p, ",{:.17e},{:.17e}", s.u().values()[i], s.v().values()[i]).unwrap();
            }
            p.push('\n');
        }
        out.csv("sweep_profiles.csv", &p)?;
    }
    let mut summary = String::new();
    for r in report
        .records
        .iter()
        .chain(std::iter::once(&report.infinite))
    {
        writeln!(
            summary,
            "beta={:<8} level={:.10} segregation={:.3e} dist_to_limit={:.4e}",
            r.beta.to_string(),
            r.level,
            r.segregation,
            r.dist_to_limit
        )
        .unwrap();
    }
    write!(
        summary,
        "limit point check: {}",
        if diag.passed() { "pass" } else { "fail" }
    )
    .unwrap();
    Ok(Outcome {
        files: out.files,
        ok: true,
        summary,
    })
}

pub fn cmd_check(cfg: &RunConfig) -> Result<Outcome> {
    let rows = run_checks(cfg.seed, cfg.samples);
    let ok = rows.iter().all(|r| r.passed);
    let mut out = Writer::new(cfg)?;
    let mut csv = String::from("suite,check,passed,detail\n");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},\"{}\"",
            r.suite,
            r.name,
            r.passed,
            r.detail.replace('"', "'")
        )
        .unwrap();
    }
    out.csv("check.csv", &csv)?;
    Ok(Outcome {
        files: out.files,
        ok,
        summary: format_table(&rows),
    })
}
