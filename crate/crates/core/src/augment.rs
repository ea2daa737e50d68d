//! Pseudo two-class augmentation: real rows versus rows drawn from the
//! product of the empirical column marginals.

use rand::Rng;

use crate::data::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowLabel {
    Real,
    Pseudo,
}

/// The `2N` augmented rows. Row `r < N` is real sample `r`; row `N + i` is pseudo row `i`.
#[derive(Debug, Clone)]
pub struct AugmentedSet<'a> {
    real: &'a FeatureMatrix,
    pseudo: FeatureMatrix,
}

impl<'a> AugmentedSet<'a> {
    pub fn from_parts(real: &'a FeatureMatrix, pseudo: FeatureMatrix) -> Self {
        assert_eq!(real.nrows(), pseudo.nrows());
        assert_eq!(real.ncols(), pseudo.ncols());
        Self { real, pseudo }
    }

    #[inline]
    pub fn num_real(&self) -> usize {
        self.real.nrows()
    }

    #[inline]
    pub fn len(&self) -> usize {
        2 * self.real.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.real.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.real.ncols()
    }

    #[inline]
    pub fn label(&self, r: usize) -> RowLabel {
        if r < self.num_real() {
            RowLabel::Real
        } else {
            RowLabel::Pseudo
        }
    }

    /// Source sample index of a real row.
    #[inline]
    pub fn origin(&self, r: usize) -> Option<usize> {
        (r < self.num_real()).then_some(r)
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.num_real();
        if r < n {
            self.real.row(r)
        } else {
            self.pseudo.row(r - n)
        }
    }

    #[inline]
    pub fn value(&self, r: usize, col: usize) -> f64 {
        let n = self.num_real();
        if r < n {
            self.real.get(r, col)
        } else {
            self.pseudo.get(r - n, col)
        }
    }

    pub fn pseudo(&self) -> &FeatureMatrix {
        &self.pseudo
    }
}

/// Draws `N` pseudo rows, each coordinate sampled with replacement from the
/// observed values of its column, independently across columns.
pub fn sample_pseudo<R: Rng + ?Sized>(main: &FeatureMatrix, rng: &mut R) -> FeatureMatrix {
    let (n, d) = (main.nrows(), main.ncols());
    assert!(n >= 1, "augmentation needs at least one sample");
    let mut pseudo = FeatureMatrix::zeros(n, d);
    for col in 0..d {
        for row in 0..n {
            let src = rng.random_range(0..n);
            pseudo.set(row, col, main.get(src, col));
        }
    }
    pseudo
}

pub fn augment<'a, R: Rng + ?Sized>(main: &'a FeatureMatrix, rng: &mut R) -> AugmentedSet<'a> {
    let pseudo = sample_pseudo(main, rng);
    AugmentedSet::from_parts(main, pseudo)
}
