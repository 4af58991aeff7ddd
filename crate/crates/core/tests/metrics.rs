use proptest::prelude::*;
use sbr_core::metrics::{hit_rate_at_n, mrr_at_n, rank_of, topk, Evaluation, RankTally};
use sbr_core::Rng;

/// Full stable sort by (score desc, item asc): the reference ranking.
fn sorted_items(scores: &[f64]) -> Vec<u32> {
    let mut items: Vec<u32> = (1..=scores.len() as u32).collect();
    items.sort_by(|&a, &b| {
        scores[b as usize - 1]
            .partial_cmp(&scores[a as usize - 1])
            .unwrap()
            .then(a.cmp(&b))
    });
    items
}

fn oracle(scores: &[f64], label: u32, n: usize) -> (f64, f64) {
    let rank = sorted_items(scores).iter().position(|&i| i == label).unwrap() + 1;
    if rank <= n {
        (100.0, 100.0 / rank as f64)
    } else {
        (0.0, 0.0)
    }
}

fn instance(rng: &mut Rng) -> (Vec<f64>, u32) {
    let m = 1 + rng.below(50);
    // coarse values force frequent ties
    let scores: Vec<f64> = (0..m).map(|_| (rng.below(7) as f64) * 0.5 - 1.0).collect();
    let label = 1 + rng.below(m) as u32;
    (scores, label)
}

#[test]
fn hundred_instances_match_exhaustive_sort() {
    let mut rng = Rng::new(1);
    for _ in 0..100 {
        let (scores, label) = instance(&mut rng);
        let n = 20.min(scores.len());
        let (hr, mrr) = oracle(&scores, label, 20);
        let list = topk(&scores, n).unwrap();
        assert_eq!(list, sorted_items(&scores)[..n]);
        assert_eq!(hit_rate_at_n(std::slice::from_ref(&list), &[label], 20), hr);
        assert_eq!(mrr_at_n(&[list], &[label], 20), mrr);
        let mut t = RankTally::new(20);
        t.push(rank_of(&scores, label).unwrap());
        assert_eq!((t.hit_rate(), t.mrr()), (hr, mrr));
    }
}

#[test]
fn analytic_cases() {
    let rank_list = |r: usize| -> Vec<u32> {
        // label 1 placed at position r of a 30-long list
        let mut l: Vec<u32> = (2..=30).collect();
        l.insert(r - 1, 1);
        l
    };
    let lists: Vec<Vec<u32>> = [1, 20, 21].iter().map(|&r| rank_list(r)).collect();
    let hr = hit_rate_at_n(&lists, &[1, 1, 1], 20);
    assert_eq!(format!("{hr:.2}"), "66.67");
    assert_eq!(hr, 200.0 / 3.0);

    let mrr = mrr_at_n(&[rank_list(3)], &[1], 20);
    assert_eq!(format!("{mrr:.2}"), "33.33");
    assert_eq!(mrr, 100.0 / 3.0);

    let lists: Vec<Vec<u32>> = [1, 4, 25].iter().map(|&r| rank_list(r)).collect();
    assert_eq!(format!("{:.2}", mrr_at_n(&lists, &[1, 1, 1], 20)), "41.67");

    let ones: Vec<Vec<u32>> = (0..5).map(|_| rank_list(1)).collect();
    assert_eq!(hit_rate_at_n(&ones, &[1; 5], 20), 100.0);
    assert_eq!(mrr_at_n(&ones, &[1; 5], 20), 100.0);
    let misses: Vec<Vec<u32>> = (0..5).map(|_| rank_list(25)).collect();
    assert_eq!(hit_rate_at_n(&misses, &[1; 5], 20), 0.0);
}

#[test]
fn full_cutoff_always_hits() {
    let mut rng = Rng::new(2);
    let mut t = RankTally::new(50);
    for _ in 0..200 {
        let scores: Vec<f64> = (0..50).map(|_| rng.uniform()).collect();
        t.push(rank_of(&scores, 1 + rng.below(50) as u32).unwrap());
    }
    assert_eq!(t.hit_rate(), 100.0);
}

#[test]
fn cutoff_one_gives_equal_metrics() {
    let mut rng = Rng::new(3);
    let mut t = RankTally::new(1);
    for _ in 0..100 {
        let (scores, label) = instance(&mut rng);
        t.push(rank_of(&scores, label).unwrap());
    }
    assert_eq!(t.hit_rate(), t.mrr());
}

proptest! {
    #[test]
    fn report_invariants(ranks in prop::collection::vec((1usize..40, 1usize..20), 1..80), seed in any::<u64>()) {
        let mut e = Evaluation::new(20);
        for &(len, r) in &ranks {
            e.push(len, r);
        }
        let rep = e.report();
        prop_assert!(rep.mrr <= rep.hr);
        prop_assert!((0.0..=100.0).contains(&rep.hr) && (0.0..=100.0).contains(&rep.mrr));
        prop_assert_eq!(rep.example_count, ranks.len() as u64);
        prop_assert_eq!(rep.buckets.iter().map(|b| b.example_count).sum::<u64>(), ranks.len() as u64);

        let mut shuffled = ranks.clone();
        Rng::new(seed).shuffle(&mut shuffled);
        let mut e2 = Evaluation::new(20);
        for &(len, r) in &shuffled {
            e2.push(len, r);
        }
        prop_assert_eq!(e2.report(), rep);

        let (a, b) = ranks.split_at(ranks.len() / 2);
        let mut left = Evaluation::new(20);
        let mut right = Evaluation::new(20);
        a.iter().for_each(|&(l, r)| left.push(l, r));
        b.iter().for_each(|&(l, r)| right.push(l, r));
        left.merge(&right);
        prop_assert_eq!(left.report(), e.report());
    }

    #[test]
    fn topk_agrees_with_full_sort(seed in any::<u64>(), k in 0usize..=100) {
        let mut rng = Rng::new(seed);
        let scores: Vec<f64> = (0..100).map(|_| (rng.below(20) as f64).sqrt()).collect();
        prop_assert_eq!(topk(&scores, k).unwrap(), sorted_items(&scores)[..k].to_vec());
    }
}
