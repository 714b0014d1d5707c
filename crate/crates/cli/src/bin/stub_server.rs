//! Serves an in-process reference model over the bridge protocol, on
//! stdin/stdout or on a TCP listener.

use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::Parser;
use osv_core::bridge::{serve_lines, Handshake};
use osv_core::reference_models::in_process_model;
use osv_core::{SequenceModel, Symbol, Vocabulary};

#[derive(Debug, Parser)]
#[command(name = "osv-stub-server", about = "Bridge server for the built-in reference models")]
struct Args {
    /// Any in-process model name: `stub`, `rule:task1`, ...
    #[arg(long, default_value = "stub")]
    model: String,

    /// Comma-separated class labels announced in the handshake.
    #[arg(long)]
    classes: Option<String>,

    #[arg(long, default_value_t = 64)]
    max_batch: usize,

    /// Serve TCP connections on this address instead of stdin/stdout.
    #[arg(long)]
    listen: Option<String>,

    /// Exit abruptly after answering this many requests.
    #[arg(long, hide = true)]
    exit_after: Option<usize>,

    /// Sleep before sending the handshake.
    #[arg(long, hide = true, default_value_t = 0)]
    handshake_delay_ms: u64,
}

struct Scorer {
    model: Box<dyn SequenceModel>,
    vocab: Vocabulary,
    answered: usize,
    exit_after: Option<usize>,
}

impl Scorer {
    fn score(&mut self, batch: &[Vec<String>]) -> Result<Vec<Vec<f64>>, String> {
        if self.exit_after == Some(self.answered) {
            std::process::exit(3);
        }
        self.answered += 1;
        let rows: Vec<Vec<Symbol>> = batch
            .iter()
            .map(|words| words.iter().map(|w| self.vocab.intern(w)).collect())
            .collect();
        let refs: Vec<&[Symbol]> = rows.iter().map(Vec::as_slice).collect();
        self.model.score_batch(&self.vocab, &refs).map_err(|e| e.to_string())
    }
}

fn serve<R: io::BufRead, W: Write>(input: R, output: W, hs: &Handshake, scorer: &mut Scorer, delay: u64) -> io::Result<usize> {
    thread::sleep(Duration::from_millis(delay));
    serve_lines(input, output, hs, &mut |batch| scorer.score(batch))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut vocab = Vocabulary::new();
    let model = match in_process_model(&args.model, &mut vocab) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("osv-stub-server: {e}");
            return ExitCode::from(64);
        }
    };
    let classes = match &args.classes {
        Some(c) => c.split(',').map(str::to_owned).collect(),
        None => model.class_labels().to_vec(),
    };
    let hs = Handshake {
        classes,
        max_batch: args.max_batch,
    };
    let mut scorer = Scorer {
        model,
        vocab,
        answered: 0,
        exit_after: args.exit_after,
    };
    let rejected = match &args.listen {
        None => serve(io::stdin().lock(), io::stdout().lock(), &hs, &mut scorer, args.handshake_delay_ms),
        Some(addr) => TcpListener::bind(addr).and_then(|listener| {
            eprintln!("listening on {}", listener.local_addr()?);
            let mut rejected = 0;
            for stream in listener.incoming() {
                let stream = stream?;
                let reader = BufReader::new(stream.try_clone()?);
                rejected += serve(reader, stream, &hs, &mut scorer, args.handshake_delay_ms)?;
            }
            Ok(rejected)
        }),
    };
    match rejected {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("osv-stub-server: rejected {n} request(s)");
            ExitCode::from(65)
        }
        Err(e) => {
            eprintln!("osv-stub-server: {e}");
            ExitCode::from(74)
        }
    }
}
