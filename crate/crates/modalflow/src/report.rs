//! Report tables. All floating-point output is written with 6 significant
//! digits; consumers compare numerically, never textually.

use crate::bargaining::SharingResult;
use crate::error::Result;

/// Format with `digits` significant digits, plain decimal notation.
pub fn format_sig(x: f64, digits: u32) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - exp).clamp(0, 20) as usize;
    format!("{:.*}", decimals, x)
}

pub fn sig6(x: f64) -> String {
    format_sig(x, 6)
}

/// equilibrium.csv: per-link flow, cost and profit at a fixed incentive.
pub fn write_equilibrium_csv<W: std::io::Write>(
    mut w: W,
    flows: &[f64],
    costs: &[f64],
    profits: &[f64],
) -> Result<()> {
    writeln!(w, "link,f,cost,profit")?;
    for l in 0..flows.len() {
        writeln!(w, "{},{},{},{}", l + 1, sig6(flows[l]), sig6(costs[l]), sig6(profits[l]))?;
    }
    Ok(())
}

/// incentive.csv: optimized incentive and the equilibrium it induces.
pub fn write_incentive_csv<W: std::io::Write>(
    mut w: W,
    j_star: &[f64],
    flows: &[f64],
    costs: &[f64],
    profits: &[f64],
) -> Result<()> {
    writeln!(w, "link,j,f,cost,profit")?;
    for l in 0..flows.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            l + 1,
            sig6(j_star[l]),
            sig6(flows[l]),
            sig6(costs[l]),
            sig6(profits[l])
        )?;
    }
    Ok(())
}

/// sharing.csv: per-provider accounting of the bargaining outcome.
pub fn write_sharing_csv<W: std::io::Write>(
    mut w: W,
    names: &[String],
    sharing: &SharingResult,
) -> Result<()> {
    writeln!(w, "provider,before,after,compensation,final,increase")?;
    for (i, name) in names.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            name,
            sig6(sharing.disagreement[i]),
            sig6(sharing.post[i]),
            sig6(sharing.compensation[i]),
            sig6(sharing.allocation[i]),
            sig6(sharing.increase[i])
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(230.34134948400745), "230.341");
        assert_eq!(sig6(0.0012345678), "0.00123457");
        assert_eq!(sig6(-1.58), "-1.58000");
        assert_eq!(sig6(49.98), "49.9800");
        assert_eq!(sig6(1234567.89), "1234568");
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(-0.0), "0");
    }

    #[test]
    fn csv_headers_are_stable() {
        let mut buf = Vec::new();
        write_equilibrium_csv(&mut buf, &[1.0], &[2.0], &[3.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "link,f,cost,profit");
        assert_eq!(text.lines().nth(1).unwrap(), "1,1.00000,2.00000,3.00000");

        let mut buf = Vec::new();
        write_incentive_csv(&mut buf, &[-0.5], &[1.0], &[2.0], &[3.0]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "link,j,f,cost,profit");
    }
}
