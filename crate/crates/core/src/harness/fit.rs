use serde::Serialize;

/// Ordinary least-squares line through the included points. Slope and
/// intercept are `None` with fewer than two usable points; R² is `None`
/// when the responses are all equal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub r2: Option<f64>,
    pub used: usize,
    pub excluded: usize,
}

/// Fits y = a + bx over points with `include` set and finite coordinates;
/// everything else counts as excluded.
pub fn fit_line(points: &[(f64, f64, bool)]) -> LineFit {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y, inc)| *inc && x.is_finite() && y.is_finite())
        .map(|&(x, y, _)| (x, y))
        .collect();
    let excluded = points.len() - pts.len();
    let n = pts.len() as f64;
    let empty = LineFit {
        slope: None,
        intercept: None,
        r2: None,
        used: pts.len(),
        excluded,
    };
    if pts.len() < 2 {
        return empty;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return empty;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    LineFit {
        slope: Some(slope),
        intercept: Some(intercept),
        r2,
        used: pts.len(),
        excluded,
    }
}

/// Log-log fit of y against k; points with y ≤ 0 are excluded.
pub fn fit_loglog(points: &[(f64, f64, bool)]) -> LineFit {
    let logged: Vec<(f64, f64, bool)> = points
        .iter()
        .map(|&(k, y, inc)| (k.ln(), y.ln(), inc && k > 0.0 && y > 0.0))
        .collect();
    fit_line(&logged)
}
