//! CSV emitters for per-iteration traces and per-round regions.

use std::io::Write;

use super::run::OptRun;
use super::OptError;

/// Columns: `iteration, round, <parameter names…>, L, incumbent_L`.
pub fn write_trace_csv<W: Write>(run: &OptRun, writer: W) -> Result<(), OptError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["iteration".to_string(), "round".to_string()];
    header.extend(run.search_box.names.iter().cloned());
    header.push("L".into());
    header.push("incumbent_L".into());
    w.write_record(&header)?;
    for (o, best) in run.history.iter().zip(run.incumbent_trace()) {
        let mut row = vec![o.iteration.to_string(), o.round.to_string()];
        row.extend(o.theta.iter().map(|v| v.to_string()));
        row.push(o.value.to_string());
        row.push(best.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Columns: `round`, the center `c_i` and row-major shape `A_i_j` in
/// normalized coordinates (all-zero `A` for the full box), then the bounding
/// box `lo_<name>, hi_<name>` in parameter units.
pub fn write_regions_csv<W: Write>(run: &OptRun, writer: W) -> Result<(), OptError> {
    let mut w = csv::Writer::from_writer(writer);
    let d = run.search_box.dim();
    let mut header = vec!["round".to_string()];
    header.extend((0..d).map(|i| format!("c_{i}")));
    for i in 0..d {
        header.extend((0..d).map(|j| format!("A_{i}_{j}")));
    }
    for name in &run.search_box.names {
        header.push(format!("lo_{name}"));
        header.push(format!("hi_{name}"));
    }
    w.write_record(&header)?;
    for (r, region) in run.rounds.iter().enumerate() {
        let mut row = vec![r.to_string()];
        row.extend(region.center().iter().map(|v| v.to_string()));
        row.extend(region.shape_row_major().iter().map(|v| v.to_string()));
        let (lo, hi): (Vec<f64>, Vec<f64>) = region.bounding_box().into_iter().unzip();
        for (l, h) in run
            .search_box
            .denormalize(&lo)
            .into_iter()
            .zip(run.search_box.denormalize(&hi))
        {
            row.push(l.to_string());
            row.push(h.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{run_identification, Schedule, SearchBox};
    use super::*;

    #[test]
    fn trace_and_regions_shapes() {
        let s = Schedule {
            iterations_per_round: 12,
            n_rounds: 2,
            n_initial: 6,
            tau: 4,
            candidates: 64,
            ..Schedule::default()
        };
        let run = run_identification(
            |z: &[f64]| -(z[0] - 0.4).powi(2) - (z[1] - 0.6).powi(2),
            &SearchBox::unit(2),
            &s,
            1,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&run, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iteration,round,z0,z1,L,incumbent_L");
        assert_eq!(lines.len(), 25);

        let mut buf = Vec::new();
        write_regions_csv(&run, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "round,c_0,c_1,A_0_0,A_0_1,A_1_0,A_1_1,lo_z0,hi_z0,lo_z1,hi_z1"
        );
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "0,0.5,0.5,0,0,0,0,0,1,0,1");
    }
}
