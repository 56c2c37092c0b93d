//! Per-stage precision, recall and F1 plus the confusion matrix.

use tstage::metrics::{confusion_csv, stage_report, stage_table_csv};
use tstage::staging::TStage::{self, *};

fn main() -> tstage::Result<()> {
    let gt: Vec<TStage> = [T1, T1, T2, T2, T2, T3, T3, T4, T4, T4, T4, T2].to_vec();
    let pred: Vec<TStage> = [T1, T2, T2, T2, T1, T3, T4, T4, T4, T4, T3, T2].to_vec();
    let table = stage_report(&pred, &gt)?;
    print!("{}", stage_table_csv(&table));
    println!();
    print!("{}", confusion_csv(&table));
    Ok(())
}
