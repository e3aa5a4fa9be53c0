//! Gnuplot scripts for the CSV outputs. Scripts are written, never run.

use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Total energy and cumulative dissipation against `t` from an energy
    /// CSV.
    Energy,
    /// `|α|, |β|, γ` against `ε` on log axes from a defects CSV with columns
    /// `eps, alpha, beta, gamma`.
    Defects,
    /// Hopf norm and gradient mass against scale on log axes from a CSV with
    /// columns `scale, hopf_norm, gradient_mass`.
    Hopf,
}

pub fn plot_script(kind: PlotKind, csv: &str) -> String {
    let head = format!("set datafile separator ','\nset key autotitle columnhead\ndata = '{csv}'\n");
    let body = match kind {
        PlotKind::Energy => "\
set xlabel 't'
set ylabel 'energy'
plot data using 1:6 with lines title 'total', \\
     data using 1:5 with lines title 'dissipation'
",
        PlotKind::Defects => "\
set logscale xy
set xlabel 'eps'
plot data using 1:(abs($2)) with linespoints title '|alpha|', \\
     data using 1:(abs($3)) with linespoints title '|beta|', \\
     data using 1:4 with linespoints title 'gamma'
",
        PlotKind::Hopf => "\
set logscale xy
set xlabel 'scale'
plot data using 1:2 with linespoints title 'Hopf norm', \\
     data using 1:3 with linespoints title 'gradient mass'
",
    };
    format!("{head}{body}pause mouse close\n")
}

/// Write the script for `csv` to `out`. A missing CSV is only logged.
pub fn emit_plot_script(kind: PlotKind, csv: &Path, out: &Path) -> std::io::Result<()> {
    if !csv.exists() {
        log::warn!("plot script {} refers to missing {}", out.display(), csv.display());
    }
    // scripts sit next to their data, so refer to it by file name when possible
    let name = match (csv.parent(), out.parent()) {
        (Some(a), Some(b)) if a == b => csv.file_name().map(Path::new).unwrap_or(csv),
        _ => csv,
    };
    std::fs::write(out, plot_script(kind, &name.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripts_reference_their_columns() {
        let e = plot_script(PlotKind::Energy, "energy.csv");
        assert!(e.contains("'energy.csv'") && e.contains("1:6") && e.contains("1:5"));
        let d = plot_script(PlotKind::Defects, "defects.csv");
        assert!(d.contains("set logscale xy") && d.contains("abs($2)"));
        assert!(plot_script(PlotKind::Hopf, "hopf.csv").contains("Hopf norm"));
    }

    #[test]
    fn missing_csv_still_emits() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("energy.gp");
        emit_plot_script(PlotKind::Energy, &dir.path().join("energy.csv"), &out).unwrap();
        assert!(std::fs::read_to_string(out).unwrap().contains("data = 'energy.csv'"));
    }
}
