use chrono::{DateTime, FixedOffset, TimeDelta};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use sessionlens_core::clustering::{objective, run_fcm, update_memberships, Dataset, DistanceMode, FcmConfig};
use sessionlens_core::logparse::{clean, format_line, parse_line, CleaningRules, Dialect, LogEntry};
use sessionlens_core::sessionize::sessionize;
use sessionlens_core::validity::{argmin_validity, sweep, xie_beni_index, SweepConfig};
use sessionlens_core::weighting::{session_weight, url_weight, WeightConfig};

fn timestamp(secs: i64, offset_quarters: i32) -> DateTime<FixedOffset> {
    let tz = FixedOffset::east_opt(offset_quarters * 15 * 60).unwrap();
    DateTime::from_timestamp(secs, 0).unwrap().with_timezone(&tz)
}

fn not_dash(s: String) -> Option<String> {
    (s != "-").then_some(s)
}

prop_compose! {
    fn arb_entry(dialect: Dialect)(
        host in "[a-z0-9][a-z0-9.-]{0,14}",
        ident in proptest::option::of("[a-z]{1,8}"),
        authuser in proptest::option::of("[a-z]{1,8}"),
        secs in 0i64..2_000_000_000,
        quarters in -48i32..=56,
        method in prop::sample::select(vec!["GET", "POST", "HEAD", "PUT", "OPTIONS"]),
        segments in prop::collection::vec("[A-Za-z0-9_.~%-]{1,8}", 0..4),
        query in proptest::option::of("[a-z0-9=&]{1,12}"),
        protocol in prop::sample::select(vec!["HTTP/1.0", "HTTP/1.1", "HTTP/2.0"]),
        status in 100u16..600,
        bytes in proptest::option::of(0u64..10_000_000),
        referrer in proptest::option::of("[ -~]{0,24}"),
        agent in proptest::option::of("[ -~]{0,32}"),
    ) -> LogEntry {
        let path = if segments.is_empty() { "/".to_string() } else { format!("/{}", segments.join("/")) };
        let combined = dialect == Dialect::Combined;
        LogEntry {
            client_host: host,
            ident,
            authuser,
            timestamp: timestamp(secs, quarters),
            method: method.to_string(),
            path,
            query,
            protocol: protocol.to_string(),
            status,
            bytes,
            referrer: referrer.and_then(not_dash).filter(|_| combined),
            user_agent: agent.and_then(not_dash).filter(|_| combined),
            line_no: 7,
        }
    }
}

prop_compose! {
    fn arb_hit()(
        host in 0usize..4,
        agent in prop::sample::select(vec!["Mozilla/5.0", "Opera/9.80", "Googlebot/2.1", "msnbot-media"]),
        method in prop::sample::select(vec!["GET", "GET", "GET", "POST", "HEAD"]),
        path in prop::sample::select(vec!["/", "/a.html", "/b.php", "/img/x.gif", "/s.css", "/robots.txt", "/c/d.html", "/f.JPG"]),
        status in prop::sample::select(vec![200u16, 200, 304, 404, 500, 206]),
        minute in 0i64..600,
    ) -> (usize, &'static str, &'static str, &'static str, u16, i64) {
        (host, agent, method, path, status, minute)
    }
}

fn build_entries(hits: &[(usize, &str, &str, &str, u16, i64)]) -> Vec<LogEntry> {
    let base = timestamp(1_296_550_800, 22);
    hits.iter()
        .enumerate()
        .map(|(i, &(host, agent, method, path, status, minute))| LogEntry {
            client_host: format!("10.0.0.{host}"),
            ident: None,
            authuser: None,
            timestamp: base + TimeDelta::minutes(minute),
            method: method.to_string(),
            path: path.to_string(),
            query: None,
            protocol: "HTTP/1.1".to_string(),
            status,
            bytes: Some(100),
            referrer: None,
            user_agent: Some(agent.to_string()),
            line_no: i + 1,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn combined_lines_round_trip(entry in arb_entry(Dialect::Combined)) {
        let line = format_line(&entry, Dialect::Combined);
        let back = parse_line(&line, 7, Dialect::Combined).unwrap();
        prop_assert_eq!(&back, &entry);
        prop_assert_eq!(format_line(&back, Dialect::Combined), line);
    }

    #[test]
    fn common_lines_round_trip(entry in arb_entry(Dialect::Common)) {
        let line = format_line(&entry, Dialect::Common);
        let back = parse_line(&line, 7, Dialect::Common).unwrap();
        prop_assert_eq!(back, entry);
    }

    #[test]
    fn clean_is_idempotent_and_conserves(hits in prop::collection::vec(arb_hit(), 0..60)) {
        let entries = build_entries(&hits);
        let rules = CleaningRules::default();
        let (kept, report) = clean(&entries, &rules);
        prop_assert_eq!(report.input_count, entries.len());
        prop_assert_eq!(report.retained_count + report.total_dropped(), report.input_count);
        prop_assert_eq!(kept.len(), report.retained_count);

        let (again, second) = clean(&kept, &rules);
        prop_assert_eq!(&again, &kept);
        prop_assert_eq!(second.total_dropped(), 0);
        prop_assert_eq!(clean(&entries, &rules), (kept, report));
    }

    #[test]
    fn sessions_partition_the_cleaned_entries(
        hits in prop::collection::vec(arb_hit(), 1..60),
        timeout in 1i64..90,
        shift in -100_000i64..100_000,
    ) {
        let entries = build_entries(&hits);
        let (vocab, sessions) = sessionize(&entries, TimeDelta::minutes(timeout));
        let total: usize = sessions.iter().map(|s| s.url_indices.len()).sum();
        prop_assert_eq!(total, entries.len());
        prop_assert!(sessions.iter().flat_map(|s| &s.url_indices).all(|&i| i < vocab.len()));
        for s in &sessions {
            prop_assert!(s.start <= s.end);
        }

        let shifted: Vec<LogEntry> = entries
            .iter()
            .cloned()
            .map(|mut e| {
                e.timestamp += TimeDelta::minutes(shift);
                e
            })
            .collect();
        let (vocab2, sessions2) = sessionize(&shifted, TimeDelta::minutes(timeout));
        prop_assert_eq!(vocab2, vocab);
        prop_assert_eq!(sessions2.len(), sessions.len());
        for (a, b) in sessions.iter().zip(&sessions2) {
            prop_assert_eq!(&a.user, &b.user);
            prop_assert_eq!(&a.url_indices, &b.url_indices);
            prop_assert_eq!(b.start - a.start, TimeDelta::minutes(shift));
        }
    }

    #[test]
    fn weights_are_clamped_linear_ramps(lo in 0usize..10, span in 1usize..10, x in 0usize..40) {
        let hi = lo + span;
        let cfg = WeightConfig::new(lo, hi, lo, hi).unwrap();
        for w in [url_weight(x, &cfg), session_weight(x.max(1), &cfg)] {
            prop_assert!((0.0..=1.0).contains(&w));
        }
        prop_assert!(url_weight(x, &cfg) <= url_weight(x + 1, &cfg));
        let expected = if x <= lo { 0.0 } else if x >= hi { 1.0 } else { (x - lo) as f64 / span as f64 };
        prop_assert!((url_weight(x, &cfg) - expected).abs() < 1e-12);
        if x <= lo {
            prop_assert_eq!(url_weight(x, &cfg), 0.0);
        }
        if x >= hi {
            prop_assert_eq!(url_weight(x, &cfg), 1.0);
        }
    }
}

fn blobs(centers: &[(f64, f64)], per_blob: usize, spread: f64, rng_seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (b, &(cx, cy)) in centers.iter().enumerate() {
        for _ in 0..per_blob {
            rows.push(vec![cx + rng.random_range(-spread..spread), cy + rng.random_range(-spread..spread)]);
            labels.push(b);
        }
    }
    (rows, labels)
}

/// Matches rows of `a` to rows of `b` greedily; returns the largest coordinate gap.
fn center_set_gap(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut used = vec![false; b.nrows()];
    let mut worst: f64 = 0.0;
    for ra in a.rows() {
        let (j, gap) = (0..b.nrows())
            .filter(|&j| !used[j])
            .map(|j| (j, ra.iter().zip(b.row(j).iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(gap);
    }
    worst
}

fn tight(c: usize) -> FcmConfig {
    FcmConfig { c, epsilon: 1e-10, max_iter: 1000, ..FcmConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn row_permutation_permutes_memberships(seed in 0u64..1000, perm_seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let (rows, _) = blobs(&[(0.0, 0.0), (6.0, 1.0), (2.0, 8.0)], 5, 1.0, seed);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();

        let a = run_fcm(&Dataset::from_rows(&rows), &tight(3)).unwrap();
        let b = run_fcm(&Dataset::from_rows(&permuted), &tight(3)).unwrap();
        prop_assert!(center_set_gap(&a.centers, &b.centers) < 1e-6);
        prop_assert!((a.objective() - b.objective()).abs() <= 1e-8 * a.objective().max(1.0));

        // same center set, so U rows match up to a relabeling of the columns
        let relabel: Vec<usize> = (0..3)
            .map(|j| {
                (0..3)
                    .min_by(|&x, &y| {
                        let dx: f64 = a.centers.row(j).iter().zip(b.centers.row(x).iter()).map(|(p, q)| (p - q).abs()).sum();
                        let dy: f64 = a.centers.row(j).iter().zip(b.centers.row(y).iter()).map(|(p, q)| (p - q).abs()).sum();
                        dx.total_cmp(&dy)
                    })
                    .unwrap()
            })
            .collect();
        for (new_i, &old_i) in order.iter().enumerate() {
            for (j, &r) in relabel.iter().enumerate() {
                prop_assert!((a.memberships[[old_i, j]] - b.memberships[[new_i, r]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical(seed in 0u64..1000, weighted in any::<bool>()) {
        let (rows, _) = blobs(&[(0.0, 0.0), (3.0, 3.0)], 6, 2.0, seed);
        let m = rows.len();
        let data = Dataset::with_weights(
            Dataset::from_rows(&rows).values_owned(),
            Array1::from_shape_fn(m, |i| (i % 5) as f64 / 4.0 + 0.1),
            Array1::from(vec![0.5, 1.0]),
        )
        .unwrap();
        let mode = if weighted { DistanceMode::Weighted } else { DistanceMode::Unweighted };
        let cfg = FcmConfig { c: 3, seed, mode, ..FcmConfig::default() };
        let a = run_fcm(&data, &cfg).unwrap();
        let b = run_fcm(&data, &cfg).unwrap();
        prop_assert_eq!(a.objective_trace.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                        b.objective_trace.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a, b);
    }

    /// Against every crisp 2-partition turned into a fuzzy state (partition
    /// means as centers, memberships from those centers). A single seed can
    /// stop in a local minimum, so the best fixed point over 16 seeds is used.
    #[test]
    fn fcm_beats_every_partition_seeded_state(bits in prop::collection::vec(prop::collection::vec(0u8..2, 3), 3..=6)) {
        let rows: Vec<Vec<f64>> = bits.iter().map(|r| r.iter().map(|&b| f64::from(b)).collect()).collect();
        let mut distinct = rows.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        prop_assume!(distinct.len() >= 2);

        let data = Dataset::from_rows(&rows);
        let m = rows.len();
        let fcm_best = (0..16)
            .map(|seed| run_fcm(&data, &FcmConfig { c: 2, epsilon: 1e-9, max_iter: 2000, seed, ..FcmConfig::default() }).unwrap().objective())
            .fold(f64::INFINITY, f64::min);

        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << m) - 1 {
            let mut centers = Array2::<f64>::zeros((2, 3));
            let mut sizes = [0.0f64; 2];
            for (i, row) in rows.iter().enumerate() {
                let j = ((mask >> i) & 1) as usize;
                sizes[j] += 1.0;
                for (k, &x) in row.iter().enumerate() {
                    centers[[j, k]] += x;
                }
            }
            for j in 0..2 {
                for k in 0..3 {
                    centers[[j, k]] /= sizes[j];
                }
            }
            let u = update_memberships(&centers, &data, 2.0, DistanceMode::Unweighted);
            best = best.min(objective(&u, &centers, &data, 2.0, DistanceMode::Unweighted));
        }
        prop_assert!(fcm_best <= best + 1e-9, "fcm J {} > partition minimum {}", fcm_best, best);
    }

    #[test]
    fn validity_ignores_cluster_order(seed in 0u64..1000) {
        let (rows, _) = blobs(&[(0.0, 0.0), (5.0, 0.0), (0.0, 5.0)], 4, 1.5, seed);
        let data = Dataset::from_rows(&rows);
        let state = run_fcm(&data, &FcmConfig { c: 3, seed, ..FcmConfig::default() }).unwrap();
        let s = xie_beni_index(&state.memberships, &state.centers, &data, DistanceMode::Unweighted).unwrap();
        let order = [2usize, 0, 1];
        let u = state.memberships.select(ndarray::Axis(1), &order);
        let v = state.centers.select(ndarray::Axis(0), &order);
        let t = xie_beni_index(&u, &v, &data, DistanceMode::Unweighted).unwrap();
        prop_assert!((s - t).abs() <= 1e-12 * s.abs().max(1e-300));
    }
}

trait ValuesOwned {
    fn values_owned(&self) -> Array2<f64>;
}

impl ValuesOwned for Dataset {
    fn values_owned(&self) -> Array2<f64> {
        use sessionlens_core::clustering::WeightedPoints;
        self.values().to_owned()
    }
}

#[test]
fn single_seed_can_stop_in_a_local_minimum() {
    let rows = [[0.0, 1.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]].map(|r| r.to_vec());
    let data = Dataset::from_rows(&rows);
    let run = |seed| run_fcm(&data, &FcmConfig { c: 2, epsilon: 1e-9, max_iter: 2000, seed, ..FcmConfig::default() }).unwrap();
    let (stuck, good) = (run(2), run(3));
    assert!(stuck.converged && good.converged);
    assert!((stuck.objective() - 1.01208573).abs() < 1e-6);
    assert!((good.objective() - 0.59112069).abs() < 1e-6);
}

#[test]
fn duplicated_points_give_the_same_centers() {
    let (rows, _) = blobs(&[(0.0, 0.0), (8.0, 8.0)], 5, 1.0, 3);
    let doubled: Vec<Vec<f64>> = rows.iter().flat_map(|r| [r.clone(), r.clone()]).collect();
    let a = run_fcm(&Dataset::from_rows(&rows), &tight(2)).unwrap();
    let b = run_fcm(&Dataset::from_rows(&doubled), &tight(2)).unwrap();
    assert!(center_set_gap(&a.centers, &b.centers) < 1e-6);
}

#[test]
fn two_blobs_recover_means_and_labels() {
    let (rows, labels) = blobs(&[(0.0, 0.0), (20.0, 5.0)], 5, 0.5, 11);
    let state = run_fcm(&Dataset::from_rows(&rows), &FcmConfig::default()).unwrap();
    let means = [(0usize..5), (5..10)].map(|r| {
        let n = r.len() as f64;
        let pts: Vec<&Vec<f64>> = rows[r].iter().collect();
        [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n]
    });
    let truth = Array2::from_shape_fn((2, 2), |(j, k)| means[j][k]);
    assert!(center_set_gap(&state.centers, &truth) < 0.05);
    let found = sessionlens_core::clustering::crisp_labels(&state.memberships);
    let same = found.iter().zip(&labels).all(|(f, l)| (*f == found[0]) == (*l == labels[0]));
    assert!(same, "labels {found:?} vs {labels:?}");
}

#[test]
fn near_crisp_fcm_agrees_with_hcm() {
    use sessionlens_core::clustering::{crisp_labels, run_hcm, HcmConfig};
    let data = Dataset::from_1d(&[0.0, 1.0, 9.0, 10.0]);
    let hcm = run_hcm(&data, &HcmConfig::default()).unwrap();
    assert!((hcm.objective - 1.0).abs() < 1e-12);
    let fcm = run_fcm(&data, &FcmConfig { q: 1.05, ..FcmConfig::default() }).unwrap();
    let labels = crisp_labels(&fcm.memberships);
    let agree = labels.iter().zip(&hcm.assignment).all(|(f, h)| (*f == labels[0]) == (*h == hcm.assignment[0]));
    assert!(agree, "fcm {labels:?} hcm {:?}", hcm.assignment);
}

#[test]
fn two_blob_sweep_picks_two() {
    let (rows, _) = blobs(&[(0.0, 0.0), (10.0, 10.0)], 10, 1.0, 5);
    let data = Dataset::from_rows(&rows);
    let cfg = SweepConfig { k_min: 2, k_max: Some(6), threads: 0 };
    let result = sweep(&data, &data, &FcmConfig::default(), &cfg).unwrap();
    assert_eq!(result.records.len(), 5);
    assert_eq!(result.best_k_weighted, Some(2));
    assert_eq!(result.best_k_unweighted, Some(2));
}

#[test]
fn four_copies_of_a_blob_pick_four() {
    let (one, _) = blobs(&[(0.0, 0.0)], 6, 1.0, 9);
    let rows: Vec<Vec<f64>> = [(0.0, 0.0), (20.0, 0.0), (0.0, 20.0), (20.0, 20.0)]
        .iter()
        .flat_map(|&(dx, dy)| one.iter().map(move |p| vec![p[0] + dx, p[1] + dy]))
        .collect();
    let data = Dataset::from_rows(&rows);
    let cfg = SweepConfig { k_min: 2, k_max: Some(5), threads: 0 };
    let result = sweep(&data, &data, &FcmConfig::default(), &cfg).unwrap();
    assert_eq!(result.best_k(DistanceMode::Weighted), Some(4));
    assert_eq!(result.best_k(DistanceMode::Unweighted), Some(4));
}

#[test]
fn best_k_is_the_brute_force_argmin() {
    let (rows, _) = blobs(&[(0.0, 0.0), (4.0, 0.0), (9.0, 3.0)], 6, 1.5, 21);
    let data = Dataset::from_rows(&rows);
    let result = sweep(&data, &data, &FcmConfig::default(), &SweepConfig { k_min: 2, k_max: Some(6), threads: 0 }).unwrap();
    for mode in [DistanceMode::Weighted, DistanceMode::Unweighted] {
        let mut best: Option<(usize, f64)> = None;
        for r in &result.records {
            if let Some(s) = r.entry(mode).validity() {
                if best.is_none_or(|(_, b)| s < b) {
                    best = Some((r.k, s));
                }
            }
        }
        assert_eq!(result.best_k(mode), best.map(|b| b.0));
        assert_eq!(argmin_validity(&result.records, mode), best.map(|b| b.0));
    }
}
