//! Plain CSV output. Floats carry 17 significant digits so they read back
//! bit-for-bit.

use std::collections::HashMap;
use std::io::Write;

use csv::Writer;

use tsslab::lotka_volterra::LvTrajectory;
use tsslab::tss::TssPath;
use tsslab::{EventKind, Trait, TraitKey, Trajectory};

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn trait_columns(prefix: &str, dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("{prefix}{i}")).collect()
}

fn coords(x: &Trait) -> impl Iterator<Item = String> + '_ {
    x.coords().iter().map(|&c| float(c))
}

/// One row per event: time, kind, the acting individual's trait and, for
/// mutant births, the child's trait.
pub fn write_events<W: Write>(out: W, traj: &Trajectory, dim: usize) -> csv::Result<()> {
    let mut w = Writer::from_writer(out);
    let mut header = vec!["time".to_string(), "kind".to_string()];
    header.extend(trait_columns("x", dim));
    header.extend(trait_columns("child_x", dim));
    w.write_record(&header)?;

    let mut points: HashMap<TraitKey, Trait> = traj
        .initial
        .points()
        .map(|(k, x, _)| (k.clone(), x.clone()))
        .collect();
    let blank = vec![String::new(); dim];
    for e in &traj.events {
        let (kind, actor, child) = match &e.kind {
            EventKind::BirthClonal { parent } => ("birth", parent, None),
            EventKind::BirthMutant {
                parent,
                child,
                child_trait,
            } => {
                points
                    .entry(child.clone())
                    .or_insert_with(|| child_trait.clone());
                ("mutant-birth", parent, Some(child_trait))
            }
            EventKind::Death { individual } => ("death", individual, None),
        };
        let x = &points[actor];
        let mut row = vec![float(e.time), kind.to_string()];
        row.extend(coords(x));
        match child {
            Some(y) => row.extend(coords(y)),
            None => row.extend(blank.iter().cloned()),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per atom per snapshot, atoms in key order.
pub fn write_snapshots<W: Write>(out: W, traj: &Trajectory, dim: usize, k: u64) -> csv::Result<()> {
    let mut w = Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    header.extend(trait_columns("x", dim));
    header.extend(["count".to_string(), "density".to_string()]);
    w.write_record(&header)?;
    for s in &traj.snapshots {
        for (x, count) in &s.atoms {
            let mut row = vec![float(s.time)];
            row.extend(coords(x));
            row.push(count.to_string());
            row.push(float(*count as f64 / k as f64));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_tss_path<W: Write>(out: W, path: &TssPath<f64>, dim: usize) -> csv::Result<()> {
    let mut w = Writer::from_writer(out);
    let mut header = vec!["time".to_string()];
    header.extend(trait_columns("x", dim));
    header.push("equilibrium_mass".into());
    w.write_record(&header)?;
    for s in &path.steps {
        let mut row = vec![float(s.time)];
        row.extend(coords(&s.trait_value));
        row.push(float(s.equilibrium_mass));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_lv<W: Write>(out: W, traj: &LvTrajectory<f64>) -> csv::Result<()> {
    let mut w = Writer::from_writer(out);
    w.write_record(["time", "n_x", "n_y"])?;
    for &(t, a, b) in &traj.samples {
        w.write_record([float(t), float(a), float(b)])?;
    }
    w.flush()?;
    Ok(())
}
