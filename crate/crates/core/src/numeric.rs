//! Small numeric helpers shared by the solvers.

/// Neumaier compensated summation; keeps prefix sums accurate when slopes
/// span several orders of magnitude.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct StableSum {
    sum: f64,
    compensation: f64,
}

impl StableSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}
