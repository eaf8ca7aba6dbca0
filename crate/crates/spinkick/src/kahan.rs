//! Kahan-compensated accumulators. Gram sums accumulate 4^N terms in
//! canonical order; compensation keeps the result independent of N at the
//! 1e-12 tolerances the tests pin.

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Two-lane Kahan accumulator for complex sums.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct KahanC {
    re: Kahan,
    im: Kahan,
}

impl KahanC {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, re: f64, im: f64) {
        self.re.add(re);
        self.im.add(im);
    }

    #[inline]
    pub fn value(&self) -> (f64, f64) {
        (self.re.value(), self.im.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensates_small_terms() {
        let mut k = Kahan::new();
        k.add(1.0);
        for _ in 0..10_000_000 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-9)).abs() < 1e-12);
    }
}
