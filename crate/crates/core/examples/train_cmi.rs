//! Trains a width-1/8 CMI_1 network on synthetic oriented textures and
//! reports the validation macro-F1 of one stratified fold.
//!
//! ```text
//! cargo run --release --example train_cmi -- [epochs] [seed]
//! ```

use cmi::data::{generate_synthetic, stratified_folds, SynthSpec};
use cmi::inception::{cmi_preset, Network};
use cmi::sampler::{model_seed, sample_one};
use cmi::train::{evaluate_model, train_model, F1Average, TrainConfig};

fn main() -> cmi::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(30);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let data = generate_synthetic(&SynthSpec {
        seed,
        ..SynthSpec::default()
    })?;
    let arch = cmi_preset(1)?.with_width(0.125).with_resolution(64, 64);
    let assignment = sample_one(arch.cb_count(), &cmi::activation::ActivationKind::STANDARD_SET, model_seed(seed, 0))?;
    let mut net = Network::<f32>::build(&arch, assignment, seed)?;
    let folds = stratified_folds(&data.labels(), 3, seed)?;
    let (train, valid) = (folds.complement(0), folds.fold(0));

    let config = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let outcome = train_model(&mut net, &data, &train, &config)?;
    for (e, loss) in outcome.loss_curve.iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.4}", e + 1);
    }
    let eval = evaluate_model(&net, &data, &valid, 16, F1Average::Macro)?;
    println!(
        "status {:?}  train {:.1}s  validation macro-F1 {:.4}  test {:.3}s",
        outcome.status, outcome.t_train_seconds, eval.f1, eval.t_test_seconds
    );
    Ok(())
}
