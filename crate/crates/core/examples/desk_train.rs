//! Trains the desk preset through both stages and prints the validation curve.
//!
//! `cargo run --release -p crloc --example desk_train -- [epochs] [out.crcnn]`

use crloc::neural::{save_model, NetworkSpec, NetworkState};
use crloc::train::{train, TrainConfig};

fn main() -> crloc::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(100, |a| a.parse().expect("epoch count"));
    let out = args.next();

    let mut s1 = TrainConfig::desk_stage1();
    s1.epochs_max = epochs;
    let mut s2 = TrainConfig::desk_stage2();
    s2.epochs_max = epochs;

    let net = NetworkState::new(NetworkSpec::desk(), 1)?;
    let mut log = |e: &crloc::train::EpochRecord, improved: bool, _: &NetworkState| {
        println!(
            "epoch {:3} val {:.4} loss {:.4} {:6} ms{}",
            e.epoch,
            e.val_error,
            e.train_loss.unwrap_or(f64::NAN),
            e.wall_ms,
            if improved { " *" } else { "" }
        );
    };
    let (net, r1) = train(net, &s1, &mut log)?;
    println!("stage 1 best {:.4} @ {}", r1.best_error, r1.best_epoch);
    let (net, r2) = train(net, &s2, &mut log)?;
    println!("stage 2 best {:.4} @ {}", r2.best_error, r2.best_epoch);
    if let Some(path) = out {
        save_model(&net, path)?;
    }
    Ok(())
}
