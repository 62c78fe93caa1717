//! Batch front end: configure and launch constructions, re-run verification
//! suites on stored traces, and export tabular data for external plotting.
//!
//! Exit codes: 0 success; 2 configuration error; 3 construction or
//! verification failure (a partial trace is still written); 4 search-budget
//! exhaustion; 5 unreadable or mismatched trace; 6 output I/O failure.

use clap::{Parser, Subcommand};
use conjforge::config::RunConfig;
use conjforge::construction::{first_gap_check, periodic_orbit_check, run, verify_stage};
use conjforge::ergodic::{ratio_membership, rotation_number, singularity_diagnostic, xi_measure};
use conjforge::error::CjError;
use conjforge::hp::Hp;
use conjforge::maps::MapExpr;
use conjforge::oracle::build_oracle;
use conjforge::trace::{checksum_of, from_doc, read_string, to_doc, write_string, TraceDoc};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "conjforge",
    about = "constructs circle-diffeomorphism towers and verifies their finite-stage certificates"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a construction from a config file and write the trace.
    Construct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run verification suites from a stored trace.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        /// all | stages | measures | ratio | returns | singularity
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Export tabular data (graphs | measures | returns) from a trace.
    Export {
        #[arg(long)]
        trace: PathBuf,
        /// omit to export nothing (exit 0)
        #[arg(long)]
        what: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Construct { config, out } => cmd_construct(&config, &out),
        Cmd::Verify { trace, suite } => cmd_verify(&trace, &suite),
        Cmd::Export { trace, what, out } => cmd_export(&trace, what.as_deref(), &out),
    };
    ExitCode::from(code)
}

fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config: {e}"))?;
    let mut cfg: RunConfig =
        toml::from_str(&text).map_err(|e| format!("cannot parse config: {e}"))?;
    if let Ok(bits) = std::env::var("CONJFORGE_MANTISSA_BITS") {
        match bits.parse::<u32>() {
            Ok(b) if b >= 64 => cfg.precision.mantissa_bits = b,
            _ => return Err(format!("bad CONJFORGE_MANTISSA_BITS '{bits}'")),
        }
    }
    Ok(cfg)
}

/// Write atomically: temp file in the target directory, then rename.
fn write_atomic(path: &Path, content: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)
}

fn cmd_construct(config_path: &Path, out: &Path) -> u8 {
    let cfg = match load_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    if let Err(e) = cfg.family() {
        eprintln!("config error: {e}");
        return 2;
    }
    let oracle = match build_oracle(&cfg.oracle) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    let trace = match run(&cfg, oracle) {
        Ok(t) => t,
        Err(CjError::Config(e)) => {
            eprintln!("config error: {e}");
            return 2;
        }
        Err(e @ (CjError::SearchBudgetExceeded(_) | CjError::BudgetExceeded(_))) => {
            eprintln!("budget exhausted: {e}");
            return 4;
        }
        Err(e) => {
            eprintln!("construction failed: {e}");
            return 3;
        }
    };
    let doc = to_doc(&trace);
    if let Err(e) = write_atomic(out, &write_string(&doc)) {
        eprintln!("cannot write trace: {e}");
        return 6;
    }
    for s in &trace.stages {
        for c in &s.checks {
            println!(
                "stage {} {:<28} {}  [{}]",
                s.n,
                c.name,
                if c.pass { "pass" } else { "FAIL" },
                c.margin
            );
        }
    }
    match &trace.failure {
        None if trace.overall_pass() => {
            println!("construction complete: {} stages, all checks pass", trace.depth());
            0
        }
        Some(f) if f.contains("budget") || f.contains("candidate") => {
            eprintln!("budget exhaustion: {f}");
            4
        }
        other => {
            eprintln!("construction failed: {other:?}");
            3
        }
    }
}

type LoadedTrace = (TraceDoc, conjforge::construction::ConstructionTrace);

fn load_trace(path: &Path) -> Result<LoadedTrace, u8> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("cannot read trace: {e}");
        5u8
    })?;
    let doc = read_string(&text).map_err(|e| {
        eprintln!("trace format: {e}");
        5u8
    })?;
    if checksum_of(&doc) != doc.checksum {
        eprintln!("warning: checksum mismatch (file edited?); exact checks will decide");
    }
    let trace = from_doc(&doc).map_err(|e| {
        eprintln!("trace rejected: {e}");
        3u8
    })?;
    Ok((doc, trace))
}

fn cmd_verify(path: &Path, suite: &str) -> u8 {
    let (_doc, trace) = match load_trace(path) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let mut clean = true;
    let run_stages = matches!(suite, "all" | "stages");
    let run_measures = matches!(suite, "all" | "measures");
    let run_ratio = matches!(suite, "all" | "ratio" | "returns");
    let run_singularity = matches!(suite, "all" | "singularity");
    if !(run_stages || run_measures || run_ratio || run_singularity) {
        eprintln!("unknown suite '{suite}'");
        return 2;
    }
    if run_stages {
        for n in 1..=trace.depth() {
            for c in verify_stage(&trace, n) {
                println!(
                    "stage {n} {:<28} {}  [{}]",
                    c.name,
                    if c.pass { "pass" } else { "FAIL" },
                    c.margin
                );
                clean &= c.pass;
            }
            let p = periodic_orbit_check(&trace, n);
            println!(
                "stage {n} {:<28} {}  [{}]",
                p.name,
                if p.pass { "pass" } else { "FAIL" },
                p.margin
            );
            clean &= p.pass;
        }
        let fg = first_gap_check(&trace);
        println!(
            "trace   {:<28} {}  [{}]",
            fg.name,
            if fg.pass { "pass" } else { "FAIL" },
            fg.margin
        );
        clean &= fg.pass;
    }
    if run_measures {
        for n in 1..=trace.depth() {
            match xi_measure(&trace, n) {
                Ok(rep) => {
                    let ok = rep.matches && rep.class_decomposition_ok;
                    println!(
                        "measure depth {n}: exact == direct: {}  (value {})",
                        if ok { "pass" } else { "FAIL" },
                        rep.exact
                    );
                    clean &= ok;
                }
                Err(e) => {
                    println!("measure depth {n}: FAIL ({e})");
                    clean = false;
                }
            }
        }
    }
    if run_ratio {
        match ratio_membership(&trace, trace.depth().min(2).max(1), 4) {
            Ok(rep) => {
                println!(
                    "ratio membership: {} returns checked, {} violations",
                    rep.returns_checked,
                    rep.violations.len()
                );
                clean &= rep.clean();
            }
            Err(e) => {
                println!("ratio membership: skipped ({e})");
            }
        }
    }
    if run_singularity {
        if matches!(trace.family, conjforge::generators::GenTag::IiInfty { .. }) {
            match singularity_diagnostic(&trace, trace.depth()) {
                Ok(rep) => {
                    for c in &rep.checks {
                        println!(
                            "singularity {:<24} {}  [{}]",
                            c.name,
                            if c.pass { "pass" } else { "FAIL" },
                            c.margin
                        );
                        clean &= c.pass;
                    }
                }
                Err(e) => {
                    println!("singularity: FAIL ({e})");
                    clean = false;
                }
            }
        } else if suite == "singularity" {
            println!("singularity: not applicable to this family");
        }
    }
    if clean {
        println!("verification clean");
        0
    } else {
        eprintln!("verification found failures");
        3
    }
}

fn sample_map(expr: &MapExpr, n: usize, prec: u32) -> String {
    let mut out = String::from("x\ty\n");
    for i in 0..n {
        let x = Hp::from_f64((i as f64 + 0.5) / n as f64);
        let y = expr.eval_hp(&x, prec);
        out.push_str(&format!("{:.12}\t{:.12}\n", x.to_f64(), y.to_f64()));
    }
    out
}

fn cmd_export(path: &Path, what: Option<&str>, out_dir: &Path) -> u8 {
    let Some(what) = what else {
        return 0; // nothing selected
    };
    let (_doc, trace) = match load_trace(path) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("cannot create output directory: {e}");
        return 6;
    }
    let prec = trace.config.precision.mantissa_bits;
    let write = |name: &str, content: &str| -> Result<(), u8> {
        write_atomic(&out_dir.join(name), content).map_err(|e| {
            eprintln!("cannot write {name}: {e}");
            6u8
        })
    };
    let result = match what {
        "graphs" => (|| {
            for s in &trace.stages {
                let base = MapExpr::Prim(std::sync::Arc::new(s.generator.map.clone()));
                write(&format!("hhat_{}.tsv", s.n), &sample_map(&base, 512, prec))?;
                let h = conjforge::maps::cyclic_lift(&s.generator.map, s.big_q.clone(), true)
                    .expect("stored generators fix 0");
                write(&format!("h_{}.tsv", s.n), &sample_map(&h, 512, prec))?;
                write(&format!("H_{}.tsv", s.n), &sample_map(trace.big_h(s.n), 512, prec))?;
                write(&format!("f_{}.tsv", s.n), &sample_map(&trace.f(s.n), 512, prec))?;
            }
            let f = trace.f(trace.depth());
            let (v, err) = rotation_number(&f, 200, prec);
            println!(
                "rotation number estimate of deepest map: {:.9} ± {err:.3e}",
                v.to_f64()
            );
            Ok(())
        })(),
        "measures" => (|| {
            let mut tsv = String::from("depth\texact\tdirect\tpartial_product\tmatch\n");
            for n in 1..=trace.depth() {
                let rep = xi_measure(&trace, n).map_err(|e| {
                    eprintln!("measure export failed: {e}");
                    3u8
                })?;
                tsv.push_str(&format!(
                    "{}\t{}\t{}\t{:.12}\t{}\n",
                    n,
                    rep.exact,
                    rep.direct,
                    rat_f64(rep.partials.last().unwrap()),
                    rep.matches
                ));
            }
            write("measures.tsv", &tsv)
        })(),
        "returns" => (|| {
            let rep = ratio_membership(&trace, trace.depth().min(2).max(1), 4).map_err(|e| {
                eprintln!("returns export failed: {e}");
                3u8
            })?;
            let mut tsv = String::from("x\ti\texponents\tvalue\tverdict\n");
            for r in rep.rows.iter().take(10_000) {
                tsv.push_str(&format!(
                    "{}\t{}\t{:?}\t{}\t{}\n",
                    conjforge::rat::rat_to_string(&r.x),
                    r.i,
                    r.cocycle.exps,
                    conjforge::rat::rat_to_string(&r.cocycle.value),
                    r.ok
                ));
            }
            write("returns.tsv", &tsv)
        })(),
        other => {
            eprintln!("unknown export kind '{other}'");
            return 2;
        }
    };
    match result {
        Ok(()) => 0,
        Err(code) => code,
    }
}

fn rat_f64(r: &conjforge::rat::Rat) -> f64 {
    Hp::from_rat(r, 64).to_f64()
}
