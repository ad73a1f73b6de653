//! Restoration metrics (PSNR, SSIM) and segmentation metrics (confusion
//! matrix, per-class IoU, mIoU).

use crate::error::{Error, Result};
use crate::frame::{Frame, LabelMap};

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check_same(a: &Frame, b: &Frame) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "frames differ in shape: {} vs {}",
            a.dims_string(),
            b.dims_string()
        )));
    }
    Ok(())
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    check_same(a, b)?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// Peak signal-to-noise ratio in dB for unit peak. Identical frames give
/// `f64::INFINITY`.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / e).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable valid-mode filtering of a plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
    let k = gaussian_kernel();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, w, h, &k);
    let mu_b = filter_valid(b, w, h, &k);
    let e_aa = filter_valid(&aa, w, h, &k);
    let e_bb = filter_valid(&bb, w, h, &k);
    let e_ab = filter_valid(&ab, w, h, &k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2);
        total += num / den;
    }
    total / n as f64
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), unit dynamic range,
/// averaged over valid window positions and then over channels.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_same(a, b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "ssim needs frames of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let c = a.channels();
    let sum: f64 = (0..c)
        .map(|ch| ssim_plane(a.plane(ch), b.plane(ch), a.width(), a.height()))
        .sum();
    Ok(sum / c as f64)
}

/// `counts[g * C + p]` = pixels with ground truth `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
    ignored: u64,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
            ignored: 0,
        }
    }

    pub fn from_counts(num_classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != num_classes * num_classes {
            return Err(Error::Shape(format!(
                "{num_classes} classes need {} counts, got {}",
                num_classes * num_classes,
                counts.len()
            )));
        }
        Ok(ConfusionMatrix {
            num_classes,
            counts,
            ignored: 0,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn ignored(&self) -> u64 {
        self.ignored
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Elementwise sum; matrices over disjoint pixel sets combine this way.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::Shape("confusion matrices differ in class count".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored += other.ignored;
        Ok(())
    }
}

/// Counts every pixel whose ground truth is not `ignore_id`.
pub fn confusion(pred: &LabelMap, gt: &LabelMap, classes: usize, ignore_id: u8) -> Result<ConfusionMatrix> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    let w = gt.width();
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        let out_of_range = |id| Error::ClassOutOfRange {
            row: i / w,
            col: i % w,
            id,
            classes,
        };
        if p as usize >= classes {
            return Err(out_of_range(p));
        }
        if g == ignore_id {
            cm.ignored += 1;
            continue;
        }
        if g as usize >= classes {
            return Err(out_of_range(g));
        }
        cm.counts[g as usize * classes + p as usize] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    /// `(class id, IoU)`; `None` when the class has an empty union.
    pub per_class: Vec<(usize, Option<f64>)>,
    /// Mean over classes with a defined IoU.
    pub miou: f64,
}

/// Per-class IoU `tp / (row + col − tp)` and their mean over classes with a
/// nonzero union. The mean is summed as an exact fraction and rounded once.
pub fn miou(cm: &ConfusionMatrix) -> Result<IouReport> {
    let c = cm.num_classes;
    let counts: Vec<(u64, u64)> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let row: u64 = (0..c).map(|p| cm.get(k, p)).sum();
            let col: u64 = (0..c).map(|g| cm.get(g, k)).sum();
            (tp, row + col - tp)
        })
        .collect();
    let per_class: Vec<(usize, Option<f64>)> = counts
        .iter()
        .enumerate()
        .map(|(k, &(tp, union))| (k, (union > 0).then(|| tp as f64 / union as f64)))
        .collect();
    let defined: Vec<(u64, u64)> = counts.into_iter().filter(|&(_, u)| u > 0).collect();
    if defined.is_empty() {
        return Err(Error::UndefinedMiou);
    }
    let miou = exact_mean(&defined).unwrap_or_else(|| {
        per_class.iter().filter_map(|(_, v)| *v).sum::<f64>() / defined.len() as f64
    });
    Ok(IouReport { per_class, miou })
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of `num / den` fractions as one correctly rounded quotient, or
/// `None` when the reduced fraction does not fit in 53 bits.
fn exact_mean(fractions: &[(u64, u64)]) -> Option<f64> {
    let (mut num, mut den) = (0u128, 1u128);
    for &(n, d) in fractions {
        let (n, d) = (n as u128, d as u128);
        let l = den / gcd(den, d) * d;
        num = num.checked_mul(l / den)?.checked_add(n.checked_mul(l / d)?)?;
        den = l;
        let g = gcd(num, den).max(1);
        (num, den) = (num / g, den / g);
    }
    den = den.checked_mul(fractions.len() as u128)?;
    let g = gcd(num, den).max(1);
    (num, den) = (num / g, den / g);
    const LIMIT: u128 = 1 << 53;
    (num <= LIMIT && den <= LIMIT).then(|| num as f64 / den as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, v: f64) -> Frame {
        Frame::filled(w, h, 1, v).unwrap()
    }

    #[test]
    fn psnr_closed_forms() {
        let a = gray(4, 4, 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let d = psnr(&gray(4, 4, 0.2), &gray(4, 4, 0.3)).unwrap();
        assert!((d - 20.0).abs() < 1e-9, "{d}");
        let d = psnr(&gray(4, 4, 0.0), &gray(4, 4, 0.5)).unwrap();
        assert!((d - 6.0206).abs() < 1e-4, "{d}");
        assert!(psnr(&gray(4, 4, 0.0), &gray(4, 5, 0.0)).is_err());
    }

    #[test]
    fn ssim_constants() {
        let a = gray(16, 16, 0.5);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let s = ssim(&gray(16, 16, 0.2), &gray(16, 16, 0.8)).unwrap();
        let want = (2.0 * 0.2 * 0.8 + 1e-4) / (0.04 + 0.64 + 1e-4);
        assert!((s - want).abs() < 1e-9, "{s} vs {want}");
        assert!((s - 0.4707).abs() < 1e-4);
        assert!(ssim(&gray(10, 16, 0.2), &gray(10, 16, 0.2)).is_err());
    }

    #[test]
    fn ssim_self_and_symmetry() {
        let a = Frame::from_fn(20, 17, 3, |c, y, x| ((c * 13 + y * 7 + x * 3) % 17) as f64 / 17.0).unwrap();
        let b = Frame::from_fn(20, 17, 3, |c, y, x| ((c * 5 + y * 11 + x) % 13) as f64 / 13.0).unwrap();
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn confusion_fixture() {
        let gt = LabelMap::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        let pred = LabelMap::new(2, 2, vec![0, 1, 1, 1]).unwrap();
        let cm = confusion(&pred, &gt, 2, 255).unwrap();
        assert_eq!(cm.counts(), &[1, 1, 0, 2]);
        let r = miou(&cm).unwrap();
        assert_eq!(r.per_class, vec![(0, Some(0.5)), (1, Some(2.0 / 3.0))]);
        assert_eq!(r.miou, 7.0 / 12.0);
    }

    #[test]
    fn confusion_perfect_and_masked() {
        let gt = LabelMap::new(3, 1, vec![0, 2, 1]).unwrap();
        let cm = confusion(&gt, &gt, 3, 255).unwrap();
        assert_eq!((0..3).map(|k| cm.get(k, k)).sum::<u64>(), 3);
        assert_eq!(miou(&cm).unwrap().miou, 1.0);

        let masked = LabelMap::new(3, 1, vec![255; 3]).unwrap();
        let cm = confusion(&gt, &masked, 3, 255).unwrap();
        assert_eq!(cm.total(), 0);
        assert_eq!(cm.ignored(), 3);
        assert!(matches!(miou(&cm), Err(Error::UndefinedMiou)));
    }

    #[test]
    fn confusion_rejects_bad_prediction() {
        let gt = LabelMap::new(2, 2, vec![0; 4]).unwrap();
        let pred = LabelMap::new(2, 2, vec![0, 0, 0, 9]).unwrap();
        let err = confusion(&pred, &gt, 3, 255).unwrap_err();
        assert!(matches!(err, Error::ClassOutOfRange { row: 1, col: 1, id: 9, .. }));
    }

    #[test]
    fn zero_union_excluded() {
        let cm = ConfusionMatrix::from_counts(2, vec![0, 0, 0, 5]).unwrap();
        let r = miou(&cm).unwrap();
        assert_eq!(r.per_class[0], (0, None));
        assert_eq!(r.miou, 1.0);
    }
}
