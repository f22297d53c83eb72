use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BoxBound, BoxRegion, Clause, Column, Dataset, RegionSpec, Schema, Targets, Task};
use crate::seed::rng_from_seed;

/// Samples per mixture component: two large classes and one small one.
pub const GAUSSIAN_CLASS_SIZES: [usize; 3] = [1000, 1000, 100];

struct Component {
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
}

const COMPONENTS: [Component; 3] = [
    Component { mean: [3.0, 2.0], cov: [[1.0, 0.8], [0.8, 1.0]] },
    Component { mean: [5.0, 5.0], cov: [[1.0, -0.8], [-0.8, 1.0]] },
    Component { mean: [3.0, 4.0], cov: [[0.1, 0.0], [0.0, 0.1]] },
];

impl Component {
    fn sample<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        // 2x2 Cholesky factor.
        let l11 = self.cov[0][0].sqrt();
        let l21 = self.cov[1][0] / l11;
        let l22 = (self.cov[1][1] - l21 * l21).sqrt();
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        [self.mean[0] + l11 * z1, self.mean[1] + l21 * z1 + l22 * z2]
    }
}

/// Three-class 2-D Gaussian mixture (2100 rows, labels 0..3, ordered by class).
pub fn gen_gaussian_mixture(seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(GAUSSIAN_CLASS_SIZES.iter().sum());
    let mut labels = Vec::with_capacity(features.capacity());
    for (class, (comp, &n)) in COMPONENTS.iter().zip(&GAUSSIAN_CLASS_SIZES).enumerate() {
        for _ in 0..n {
            features.push(comp.sample(&mut rng).to_vec());
            labels.push(class);
        }
    }
    Dataset::new(
        Schema::continuous(&["x0", "x1"], "label", Task::Classification { num_classes: 3 }),
        features,
        Targets::Classes { labels, num_classes: 3 },
        None,
    )
    .expect("generated mixture is valid")
}

/// Uncertainty box inside class 0 with corners (2, 0) and (2.75, 1.5).
pub fn gaussian_region() -> RegionSpec {
    RegionSpec::Box(BoxRegion {
        bounds: vec![
            BoxBound { dim: 0, lo: 2.0, hi: 2.75 },
            BoxBound { dim: 1, lo: 0.0, hi: 1.5 },
        ],
    })
}

/// Seeded shuffle split; the test part gets `round(n * test_frac)` rows.
pub fn train_test_split(data: &Dataset, test_frac: f64, seed: u64) -> (Dataset, Dataset) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng_from_seed(seed));
    let n_test = ((data.len() as f64) * test_frac).round() as usize;
    let (test, train) = idx.split_at(n_test.min(data.len()));
    (data.subset(train), data.subset(test))
}

/// Noise-free mean of the heteroscedastic regression task.
pub fn regression_mean(x: f64) -> f64 {
    (2.0 * x).sin() + 0.3 * x * x - 0.4 * x + 1.0
}

/// Noise standard deviation of the regression task.
pub fn regression_noise_std(x: f64) -> f64 {
    0.2 + 0.8 * (-(x / 1.5).powi(2)).exp()
}

/// `n` draws with x uniform on [-4, 4].
pub fn gen_regression_synth(seed: u64, n: usize) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: f64 = rng.random_range(-4.0..=4.0);
        let z: f64 = StandardNormal.sample(&mut rng);
        xs.push(vec![x]);
        ys.push(regression_mean(x) + regression_noise_std(x) * z);
    }
    Dataset::regression(xs, ys).expect("generated regression data is valid")
}

/// x in (-3, -2).
pub fn regression_region() -> RegionSpec {
    RegionSpec::Box(BoxRegion {
        bounds: vec![BoxBound { dim: 0, lo: -3.0, hi: -2.0 }],
    })
}

fn cats(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Loan-style tabular data: four categorical and four continuous columns with
/// a binary label.
pub fn gen_tabular_synth(seed: u64, n: usize) -> Dataset {
    let purposes = cats(&["car", "education", "home_improvement", "medical", "vacation"]);
    let housing = cats(&["mortgage", "own", "rent"]);
    let employment = cats(&["employed", "self_employed", "unemployed", "retired"]);
    let grade = cats(&["A", "B", "C", "D"]);
    let schema = Schema {
        columns: vec![
            Column::continuous("age"),
            Column::continuous("credit_score"),
            Column::continuous("income"),
            Column::continuous("loan_amount"),
            Column::categorical("purpose", purposes.clone()),
            Column::categorical("housing", housing.clone()),
            Column::categorical("employment", employment.clone()),
            Column::categorical("grade", grade.clone()),
        ],
        label: "label".into(),
        task: Task::Classification { num_classes: 2 },
    };
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let age: f64 = rng.random_range(18.0..75.0_f64).round();
        let z_credit: f64 = StandardNormal.sample(&mut rng);
        let z_income: f64 = StandardNormal.sample(&mut rng);
        let credit = (650.0 + 90.0 * z_credit).clamp(300.0, 850.0).round();
        let income = (45.0 + 15.0 * z_income).max(5.0);
        let loan: f64 = rng.random_range(1.0..40.0_f64);
        let purpose = rng.random_range(0..purposes.len());
        let house = rng.random_range(0..housing.len());
        let emp = rng.random_range(0..employment.len());
        let g = rng.random_range(0..grade.len());
        let score = 0.012 * (credit - 650.0) + 0.04 * (income - 45.0) - 0.05 * (loan - 20.0)
            - 0.6 * g as f64
            + if emp == 2 { -1.0 } else { 0.3 }
            + 1.2;
        let noise: f64 = StandardNormal.sample(&mut rng);
        labels.push(usize::from(score + 0.5 * noise > 0.0));
        features.push(vec![age, credit, income, loan, purpose as f64, house as f64, emp as f64, g as f64]);
    }
    Dataset::new(schema, features, Targets::Classes { labels, num_classes: 2 }, None)
        .expect("generated tabular data is valid")
}

/// Applicants under 35 with credit score below 600 asking for a home
/// improvement loan.
pub fn tabular_region() -> RegionSpec {
    RegionSpec::Predicate {
        clauses: vec![
            Clause::Interval { col: "age".into(), lo: 0.0, hi: 35.0 },
            Clause::Interval { col: "credit_score".into(), lo: 0.0, hi: 600.0 },
            Clause::Equals { col: "purpose".into(), eq: "home_improvement".into() },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::region_mask;

    #[test]
    fn mixture_has_expected_class_counts() {
        let ds = gen_gaussian_mixture(3);
        let labels = ds.labels().unwrap();
        for (c, &n) in GAUSSIAN_CLASS_SIZES.iter().enumerate() {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), n);
        }
    }

    #[test]
    fn mixture_is_deterministic_per_seed() {
        assert_eq!(gen_gaussian_mixture(11), gen_gaussian_mixture(11));
        assert_ne!(gen_gaussian_mixture(11), gen_gaussian_mixture(12));
    }

    #[test]
    fn region_fraction_near_five_percent() {
        for seed in 0..10 {
            let ds = gen_gaussian_mixture(seed);
            let mask = region_mask(&ds, &gaussian_region()).unwrap();
            let frac = mask.iter().filter(|m| **m).count() as f64 / ds.len() as f64;
            assert!((frac - 0.053).abs() <= 0.015, "seed {seed}: {frac}");
        }
    }

    #[test]
    fn split_sizes() {
        let ds = gen_gaussian_mixture(0);
        let (train, test) = train_test_split(&ds, 0.2, 1);
        assert_eq!(test.len(), 420);
        assert_eq!(train.len(), 1680);
    }

    #[test]
    fn regression_formulas() {
        assert!((regression_mean(0.0) - 1.0).abs() < 1e-15);
        assert!((regression_noise_std(0.0) - 1.0).abs() < 1e-15);
        let ds = gen_regression_synth(5, 100_000);
        let ys = ds.real_targets().unwrap();
        let mean_resid: f64 = ds
            .features
            .iter()
            .zip(ys)
            .map(|(x, y)| y - regression_mean(x[0]))
            .sum::<f64>()
            / ys.len() as f64;
        assert!(mean_resid.abs() < 0.02, "{mean_resid}");
        assert!(ds.features.iter().all(|x| (-4.0..=4.0).contains(&x[0])));
    }

    #[test]
    fn tabular_region_is_populated() {
        let ds = gen_tabular_synth(1, 4000);
        let mask = region_mask(&ds, &tabular_region()).unwrap();
        let n = mask.iter().filter(|m| **m).count();
        assert!(n > 10 && n < 400, "{n}");
    }
}
