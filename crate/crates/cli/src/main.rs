use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use sisct::cheat_detect::{self, Prime, PublicParams};
use sisct::cts_sim::{self, Outcome, ScenarioConfig, SimError};
use sisct::image_io::{self, Scheme, Share};
use sisct::{ReconstructError, ShareIndex};

/// When set to a non-empty value other than `0`, randomized commands refuse to
/// run without `--seed`.
const REQUIRE_SEED_ENV: &str = "SISCT_REQUIRE_SEED";

#[derive(Parser)]
#[command(
    name = "sisct",
    version,
    about = "(2,3) secret image sharing for cheque images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a PGM image into three shares and publish verification params.
    Split {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_prefix: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = cheat_detect::DEFAULT_PRIME)]
        prime: u64,
        /// Also write each share as a viewable PGM.
        #[arg(long)]
        pgm: bool,
    },
    /// Rebuild the image from two shares.
    Reconstruct {
        #[arg(long, num_args = 2, required = true)]
        shares: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Verify both shares against these params first.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Check claimed shares against published params.
    Verify {
        #[arg(long)]
        params: PathBuf,
        /// `INDEX=PATH`, repeatable.
        #[arg(long = "claim", required = true)]
        claims: Vec<String>,
    },
    /// Publish verification params for an existing share triple.
    Params {
        #[arg(long, num_args = 3, required = true)]
        shares: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = cheat_detect::DEFAULT_PRIME)]
        prime: u64,
    },
    /// Run the clearing workflow simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Directory for transcript.ndjson and payload files; defaults to
        /// `<config>.transcript` beside the config.
        #[arg(long)]
        transcript_dir: Option<PathBuf>,
    },
    /// Flip one payload byte of a share by XOR.
    Tamper {
        #[arg(long)]
        share: PathBuf,
        #[arg(long)]
        offset: usize,
        #[arg(long, value_parser = parse_byte)]
        xor_byte: u8,
        /// Output path; the share is rewritten in place when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean squared error between two PGM images.
    Mse {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

fn parse_byte(s: &str) -> Result<u8, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u8::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|_| format!("`{s}` is not a byte (0-255 or 0x00-0xff)"))
}

enum Failure {
    Usage(String),
    Format(String),
    Verification(String),
    Rejected,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Format(_) => 2,
            Failure::Verification(_) => 3,
            Failure::Rejected => 4,
        }
    }
}

type CliResult = Result<(), Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
}

fn load_image(path: &Path) -> Result<image_io::GrayImage, Failure> {
    image_io::read_pgm(&read(path)?)
        .map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
}

fn load_share(path: &Path) -> Result<Share, Failure> {
    image_io::read_share(&read(path)?)
        .map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
}

fn load_params(path: &Path) -> Result<PublicParams, Failure> {
    let text = String::from_utf8(read(path)?)
        .map_err(|_| Failure::Format(format!("{}: not UTF-8", path.display())))?;
    PublicParams::from_text(&text).map_err(|e| Failure::Format(format!("{}: {e}", path.display())))
}

fn prime(p: u64) -> Result<Prime, Failure> {
    Prime::new(p).map_err(|e| Failure::Usage(e.to_string()))
}

fn rng(seed: Option<u64>) -> Result<ChaCha20Rng, Failure> {
    match seed {
        Some(seed) => Ok(ChaCha20Rng::seed_from_u64(seed)),
        None => {
            let required = std::env::var(REQUIRE_SEED_ENV).is_ok_and(|v| !v.is_empty() && v != "0");
            if required {
                Err(Failure::Usage(format!(
                    "--seed is required while {REQUIRE_SEED_ENV} is set"
                )))
            } else {
                Ok(ChaCha20Rng::from_entropy())
            }
        }
    }
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn verification_failure(report: &cheat_detect::VerificationReport) -> Failure {
    let list: Vec<String> = report.cheaters().iter().map(u8::to_string).collect();
    Failure::Verification(format!("cheater share(s): {}\n{report}", list.join(", ")))
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Split {
            scheme,
            input,
            out_prefix,
            seed,
            prime: p,
            pgm,
        } => {
            let p = prime(p)?;
            let mut rng = rng(seed)?;
            let img = load_image(&input)?;
            let triple = sisct::split(scheme, &img, &mut rng);
            let shares: Vec<Share> = triple.iter().cloned().collect();
            let params = cheat_detect::make_params(&shares, p, &mut rng)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            for s in &shares {
                write(
                    &prefixed(&out_prefix, &format!(".{}.shr", s.index())),
                    &image_io::write_share(s),
                )?;
                if pgm {
                    write(
                        &prefixed(&out_prefix, &format!(".{}.pgm", s.index())),
                        &image_io::share_to_pgm(s),
                    )?;
                }
            }
            write(
                &prefixed(&out_prefix, ".params"),
                params.to_text().as_bytes(),
            )
        }
        Command::Reconstruct {
            shares,
            out,
            params,
        } => {
            let a = load_share(&shares[0])?;
            let b = load_share(&shares[1])?;
            if let Some(path) = params {
                let params = load_params(&path)?;
                let report = cheat_detect::verify_shares(&params, &[&a, &b])
                    .map_err(|e| Failure::Usage(e.to_string()))?;
                if !report.all_honest() {
                    return Err(verification_failure(&report));
                }
            }
            let img = sisct::reconstruct(&a, &b).map_err(|e| match e {
                ReconstructError::DuplicateIndex(_) => Failure::Usage(e.to_string()),
                _ => Failure::Format(e.to_string()),
            })?;
            write(&out, &image_io::write_pgm(&img))
        }
        Command::Verify { params, claims } => {
            let params = load_params(&params)?;
            let mut loaded = Vec::with_capacity(claims.len());
            for claim in &claims {
                let (idx, path) = claim
                    .split_once('=')
                    .ok_or_else(|| Failure::Usage(format!("claim `{claim}` is not INDEX=PATH")))?;
                let idx: u8 = idx
                    .parse()
                    .ok()
                    .filter(|i| ShareIndex::new(*i).is_some())
                    .ok_or_else(|| Failure::Usage(format!("claim index `{idx}` outside 1..=3")))?;
                loaded.push((idx, load_share(Path::new(path))?));
            }
            let refs: Vec<(u8, &Share)> = loaded.iter().map(|(i, s)| (*i, s)).collect();
            let report =
                cheat_detect::verify(&params, &refs).map_err(|e| Failure::Usage(e.to_string()))?;
            print!("{report}");
            if report.all_honest() {
                Ok(())
            } else {
                Err(verification_failure(&report))
            }
        }
        Command::Params {
            shares,
            out,
            seed,
            prime: p,
        } => {
            let p = prime(p)?;
            let mut rng = rng(seed)?;
            let mut loaded = shares
                .iter()
                .map(|s| load_share(s))
                .collect::<Result<Vec<_>, _>>()?;
            loaded.sort_by_key(|s| s.index());
            let params = cheat_detect::make_params(&loaded, p, &mut rng)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            write(&out, params.to_text().as_bytes())
        }
        Command::Simulate {
            config,
            transcript_dir,
        } => {
            let cfg = ScenarioConfig::load(&config).map_err(|e| match e {
                SimError::Io { .. } => Failure::Format(e.to_string()),
                _ => Failure::Usage(e.to_string()),
            })?;
            let result = cts_sim::run_scenario(cfg).map_err(|e| match e {
                SimError::Tamper(_) | SimError::Config { .. } => Failure::Usage(e.to_string()),
                _ => Failure::Format(e.to_string()),
            })?;
            let dir = transcript_dir.unwrap_or_else(|| config.with_extension("transcript"));
            let path = result
                .write_transcript(&dir)
                .map_err(|e| Failure::Format(format!("{}: {e}", dir.display())))?;
            println!("outcome={}", result.outcome);
            if let Some(mse) = result.mse() {
                println!("mse={mse}");
            }
            if let Some(inquiry) = &result.inquiry {
                match inquiry {
                    cts_sim::InquiryResponse::Granted { status } => {
                        println!("inquiry=granted:{status}")
                    }
                    cts_sim::InquiryResponse::AuthenticationFailed => {
                        println!("inquiry=authentication-failed")
                    }
                }
            }
            println!("transcript={}", path.display());
            match result.outcome {
                Outcome::Accepted => Ok(()),
                Outcome::Rejected(_) => Err(Failure::Rejected),
            }
        }
        Command::Tamper {
            share,
            offset,
            xor_byte,
            out,
        } => {
            let s = load_share(&share)?;
            let tampered = image_io::tamper_share(&s, offset, xor_byte)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            write(
                out.as_deref().unwrap_or(&share),
                &image_io::write_share(&tampered),
            )
        }
        Command::Mse { a, b } => {
            let (a, b) = (load_image(&a)?, load_image(&b)?);
            let value = image_io::mse(&a, &b).map_err(|e| Failure::Format(e.to_string()))?;
            println!("{value}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(m) | Failure::Format(m) | Failure::Verification(m) => {
                    eprintln!("sisct: {m}")
                }
                Failure::Rejected => eprintln!("sisct: scenario rejected"),
            }
            ExitCode::from(failure.code())
        }
    }
}
