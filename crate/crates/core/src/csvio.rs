//! CSV/text output helpers.
//!
//! All artifact files share one dialect: comma separators, `.` decimal
//! point, LF line endings, UTF-8, floats at 17 significant digits so values
//! round-trip bit-exact.

/// Format a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Render one CSV table; every row must match the header width.
pub fn render_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for &x in &[0.0, 1.0, -1.5e-13, std::f64::consts::PI, 2.0f64.powi(-40) / 3.0] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(x.to_bits(), back.to_bits(), "{s}");
        }
    }

    #[test]
    fn csv_uses_lf_only() {
        let text = render_csv(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(text, "a,b\n1,2\n");
        assert!(!text.contains('\r'));
    }
}
