//! Saves a desk-scale network, reloads it and compares predictions.

use cmi::activation::ActivationKind;
use cmi::inception::{arch_stats, cmi_preset, load_model, save_model, Network};
use cmi::sampler::sample_one;
use cmi_tensor::Tensor;
use rand::SeedableRng;

fn main() -> cmi::Result<()> {
    let arch = cmi_preset(2)?.with_width(0.125).with_resolution(64, 64);
    let assignment = sample_one(arch.cb_count(), &ActivationKind::STANDARD_SET, 1)?;
    let net = Network::<f32>::build(&arch, assignment, 2)?;
    let dir = std::env::temp_dir().join("cmi_checkpoint_example");
    std::fs::create_dir_all(&dir).map_err(|e| cmi::Error::io(&dir, e))?;
    let path = dir.join("cmi2.bin");
    save_model(&net, &path)?;
    let back = load_model(&path)?;
    let bytes = std::fs::metadata(&path).map_err(|e| cmi::Error::io(&path, e))?.len();
    let stats = arch_stats(net.plan());
    println!("{}: {bytes} bytes on disk, {} predicted", path.display(), stats.serialized_bytes);
    let images = Tensor::uniform([4, 3, 64, 64], 0.0, 1.0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
    let (a, b) = (net.logits(images.clone())?, back.logits(images)?);
    let same = a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
    println!("logits bit-identical after reload: {same}");
    Ok(())
}
