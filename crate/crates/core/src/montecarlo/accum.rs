//! Mergeable running moments (Welford / Chan et al.).

/// Count, mean and centred second moment of one variable.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        Moments {
            n,
            mean: self.mean + d * w,
            m2: self.m2 + other.m2 + d * d * self.n as f64 * w,
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Running moments of a pair, with the centred cross moment.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoMoments {
    pub x: Moments,
    pub y: Moments,
    pub cxy: f64,
}

impl CoMoments {
    pub fn push(&mut self, u: f64, v: f64) {
        let dx = u - self.x.mean;
        self.x.push(u);
        self.y.push(v);
        self.cxy += dx * (v - self.y.mean);
    }

    pub fn merge(&self, other: &CoMoments) -> CoMoments {
        if self.x.n == 0 {
            return *other;
        }
        if other.x.n == 0 {
            return *self;
        }
        let n = (self.x.n + other.x.n) as f64;
        let dx = other.x.mean - self.x.mean;
        let dy = other.y.mean - self.y.mean;
        CoMoments {
            x: self.x.merge(&other.x),
            y: self.y.merge(&other.y),
            cxy: self.cxy + other.cxy + dx * dy * self.x.n as f64 * other.x.n as f64 / n,
        }
    }

    pub fn covariance(&self) -> f64 {
        if self.x.n < 2 {
            0.0
        } else {
            self.cxy / (self.x.n - 1) as f64
        }
    }

    /// Sample correlation; 0 when either variable is degenerate.
    pub fn correlation(&self) -> f64 {
        let denom = (self.x.m2 * self.y.m2).sqrt();
        if denom == 0.0 {
            return 0.0;
        }
        (self.cxy / denom).clamp(-1.0, 1.0)
    }
}

/// Merge a sequence by a balanced binary tree; the pairing depends only on
/// the length, never on how the items were produced.
pub fn tree_reduce<T: Clone>(items: &[T], merge: &impl Fn(&T, &T) -> T) -> Option<T> {
    match items.len() {
        0 => None,
        1 => Some(items[0].clone()),
        n => {
            let (a, b) = items.split_at(n / 2);
            let l = tree_reduce(a, merge)?;
            let r = tree_reduce(b, merge)?;
            Some(merge(&l, &r))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn constant_stream_is_exact() {
        let mut m = Moments::default();
        for _ in 0..1000 {
            m.push(1.0);
        }
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.stderr(), 0.0);
    }

    #[test]
    fn covariance_on_known_data() {
        let mut c = CoMoments::default();
        for (u, v) in [(1.0, 2.0), (2.0, 4.0), (3.0, 6.5)] {
            c.push(u, v);
        }
        // cov = sum (u - 2)(v - 4.1667) / 2
        assert!((c.covariance() - 2.25).abs() < 1e-12);
        assert!(c.correlation() > 0.99 && c.correlation() <= 1.0);
    }

    proptest! {
        #[test]
        fn merge_matches_direct(v in prop::collection::vec(-100.0f64..100.0, 2..200), cut in 0usize..200) {
            let cut = cut.min(v.len());
            let (a, b) = v.split_at(cut);
            let mut ma = Moments::default();
            a.iter().for_each(|&x| ma.push(x));
            let mut mb = Moments::default();
            b.iter().for_each(|&x| mb.push(x));
            let m = ma.merge(&mb);
            let (mean, var) = direct(&v);
            prop_assert!((m.mean - mean).abs() < 1e-9);
            prop_assert!((m.variance() - var).abs() < 1e-8 * var.max(1.0));
        }

        #[test]
        fn comerge_matches_sequential(v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 2..100), cut in 0usize..100) {
            let cut = cut.min(v.len());
            let mut all = CoMoments::default();
            v.iter().for_each(|&(x, y)| all.push(x, y));
            let mut a = CoMoments::default();
            v[..cut].iter().for_each(|&(x, y)| a.push(x, y));
            let mut b = CoMoments::default();
            v[cut..].iter().for_each(|&(x, y)| b.push(x, y));
            let m = a.merge(&b);
            prop_assert!((m.covariance() - all.covariance()).abs() < 1e-9);
        }

        #[test]
        fn tree_reduce_sums(v in prop::collection::vec(0u32..1000, 0..50)) {
            let s = tree_reduce(&v, &|a, b| a + b);
            prop_assert_eq!(s.unwrap_or(0), v.iter().sum::<u32>());
        }
    }
}
