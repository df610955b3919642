//! Stratified fold assignment for an imbalanced 436-sample, 4-class set.

use cmi::data::stratified_folds;

fn main() -> cmi::Result<()> {
    let counts = [111, 149, 108, 68];
    let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| vec![c; n]).collect();
    let plan = stratified_folds(&labels, 3, 0)?;
    println!("fold sizes {:?}", plan.fold_sizes());
    for f in 0..3 {
        let per_class: Vec<usize> = (0..counts.len())
            .map(|c| plan.fold(f).iter().filter(|&&i| labels[i] == c).count())
            .collect();
        println!("fold {f}: per class {per_class:?}, train {}", plan.complement(f).len());
    }
    Ok(())
}
