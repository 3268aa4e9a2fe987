//! NT-Xent by direct enumeration of every (anchor, other) pair.

/// Sums, over all `2N` anchors, `-log(e^{pos} / (e^{pos} + sum_neg e^{neg}))`
/// with cosine similarities divided by `tau`. `partner[a]` is the positive
/// view of anchor `a`.
pub fn nt_xent(z: &[Vec<f64>], partner: &[usize], tau: f64) -> f64 {
    let cosine = |a: &[f64], b: &[f64]| -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    };
    let mut total = 0.0;
    for anchor in 0..z.len() {
        let pos = partner[anchor];
        let numerator = (cosine(&z[anchor], &z[pos]) / tau).exp();
        let mut denominator = numerator;
        for other in 0..z.len() {
            if other == anchor || other == pos {
                continue;
            }
            denominator += (cosine(&z[anchor], &z[other]) / tau).exp();
        }
        total += -(numerator / denominator).ln();
    }
    total
}
