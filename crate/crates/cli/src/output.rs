//! PGM images, CSV matrices and frame files.

use std::fmt::Write as _;
use std::path::Path;

use adstm_core::fusion::fgrid::{write_frame, ObservationFrame};
use adstm_core::Field;
use nalgebra::DMatrix;

/// Binary 8-bit PGM, linearly scaled from the finite min..max; missing
/// pixels are black.
pub fn pgm_bytes(field: &Field) -> Vec<u8> {
    let (n1, n2) = field.shape();
    let finite: Vec<f64> = field.values.iter().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{n2} {n1}\n255\n").into_bytes();
    for i in 0..n1 {
        for j in 0..n2 {
            let v = field.values[(i, j)];
            let level = if field.is_observed(i, j) && v.is_finite() {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            out.push(level);
        }
    }
    out
}

pub fn csv_matrix(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn write_pgm(path: &Path, field: &Field) -> std::io::Result<()> {
    std::fs::write(path, pgm_bytes(field))
}

pub fn write_fgrid(path: &Path, frame: &ObservationFrame) -> std::io::Result<()> {
    std::fs::write(path, write_frame(frame))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_layout() {
        let f = Field::new(DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]));
        let b = pgm_bytes(&f);
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&b[..header.len()], header);
        assert_eq!(&b[header.len()..], &[0, 51, 102, 153, 204, 255]);
    }

    #[test]
    fn constant_field_and_mask() {
        let mut o = DMatrix::from_element(1, 2, true);
        o[(0, 1)] = false;
        let f = Field::with_mask(DMatrix::from_element(1, 2, 3.0), o).unwrap();
        let b = pgm_bytes(&f);
        assert_eq!(&b[b.len() - 2..], &[0, 0]);
    }

    #[test]
    fn csv_rows() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -2.0, 3.25]);
        assert_eq!(csv_matrix(&m), "1,0.5\n-2,3.25\n");
    }
}
