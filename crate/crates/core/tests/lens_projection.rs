use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use topoexplain::lens::{compose_filters, linear_projection, FilterComponent, FilterSpec};
use topoexplain::records::{PredictionRecord, RecordSet};

fn records(points: Vec<Vec<f64>>) -> RecordSet {
    let recs = points
        .into_iter()
        .enumerate()
        .map(|(i, embedding)| PredictionRecord {
            id: format!("r{i:03}"),
            label: i % 3,
            mean_pred_conf: 0.5,
            mean_truth_conf: (i % 7) as f64 / 7.0,
            tokens: vec![],
            embedding,
        })
        .collect();
    RecordSet::infer_classes(recs).unwrap()
}

fn gaussian_cloud(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| (0..d).map(|_| unit.sample(&mut rng)).collect())
        .collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.partial_cmp(x).unwrap());
    ev
}

fn covariance(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len() as f64;
    let d = points[0].len();
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| points.iter().map(|p| (p[a] - mean[a]) * (p[b] - mean[b])).sum::<f64>() / n)
                .collect()
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn full_rank_projection_preserves_distances() {
    let pts = gaussian_cloud(60, 6, 3);
    let set = records(pts.clone());
    let proj = linear_projection(&set, 6).unwrap();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            assert!((dist(&pts[i], &pts[j]) - dist(&proj.scores[i], &proj.scores[j])).abs() <= 1e-9);
        }
    }
}

#[test]
fn planar_data_is_reproduced_up_to_rotation() {
    let planar: Vec<Vec<f64>> = gaussian_cloud(50, 2, 8)
        .into_iter()
        .map(|p| vec![3.0 * p[0], p[1], 0.0, 0.0])
        .collect();
    let set = records(planar.clone());
    let proj = linear_projection(&set, 2).unwrap();
    assert!((proj.captured_fraction() - 1.0).abs() <= 1e-12);
    for i in 0..planar.len() {
        for j in i + 1..planar.len() {
            assert!((dist(&planar[i], &planar[j]) - dist(&proj.scores[i], &proj.scores[j])).abs() <= 1e-9);
        }
    }
}

#[test]
fn embedded_gaussian_variance_is_captured() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let basis: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..10).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let pts: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            let z: Vec<f64> = (0..3).map(|k| [3.0, 2.0, 1.0][k] * unit.sample(&mut rng)).collect();
            (0..10).map(|j| (0..3).map(|k| z[k] * basis[k][j]).sum()).collect()
        })
        .collect();
    let set = records(pts.clone());
    let proj = linear_projection(&set, 3).unwrap();

    let ev = jacobi_eigenvalues(covariance(&pts));
    let oracle = ev[..3].iter().sum::<f64>() / ev.iter().sum::<f64>();
    assert!(oracle >= 0.999);
    assert!(proj.captured_fraction() >= 0.999);
    assert!((proj.captured_fraction() - oracle).abs() <= 1e-9);
    for (v, e) in proj.variances.iter().zip(&ev) {
        assert!((v - e).abs() <= 1e-8 * e.abs().max(1.0));
    }
}

#[test]
fn projection_axes_have_positive_dominant_loading() {
    let set = records(gaussian_cloud(40, 5, 12));
    let proj = linear_projection(&set, 3).unwrap();
    for axis in &proj.axes {
        let dominant = axis
            .iter()
            .copied()
            .fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(dominant > 0.0);
    }
    assert!(linear_projection(&set, 6).is_err());
}

#[test]
fn compose_is_pure() {
    let set = records(gaussian_cloud(30, 4, 5));
    let spec = FilterSpec::new(vec![
        FilterComponent::GroundTruthLabel,
        FilterComponent::MeanTruthConf,
        FilterComponent::LinearProjection { axis: 1, dims: 2 },
    ])
    .unwrap();
    let a = compose_filters(&set, &spec, None).unwrap();
    let b = compose_filters(&set, &spec, None).unwrap();
    assert_eq!(a, b);
    let labels: Vec<f64> = set.iter().map(|r| r.label as f64).collect();
    assert_eq!(a.column(0), labels.as_slice());
}
