//! Shared fixtures for the integration and acceptance suites.
#![allow(dead_code)]

use folkrec::dataset::{build_folksonomy, Folksonomy, RawAssignment};
use rand::seq::index::{sample, sample_weighted};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CLUSTERS: usize = 8;
pub const USERS_PER_CLUSTER: usize = 25;
pub const ITEMS_PER_CLUSTER: usize = 50;
pub const TAGS_PER_CLUSTER: usize = 5;
pub const INTERACTIONS_PER_USER: usize = 10;

/// Zipf exponent of item popularity inside a cluster.
pub const POPULARITY_EXPONENT: f64 = 1.5;

/// Raw records of the planted-cluster folksonomy.
///
/// 8 disjoint clusters of 25 users, 50 items and 5 tags. Inside a cluster,
/// item popularity is Zipf-distributed over a random permutation of the items
/// and each user draws 10 distinct items by popularity. Items nobody drew are
/// then handed to distinct random users, each replacing that user's least
/// popular item that someone else also holds, so all 400 items occur. Each
/// cluster tag is the personal tag of 5 users, who tag all their items with
/// it. External ids are offset so that dense re-indexing is exercised.
pub fn planted_records(seed: u64) -> Vec<RawAssignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..ITEMS_PER_CLUSTER)
        .map(|r| ((r + 1) as f64).powf(-POPULARITY_EXPONENT))
        .collect();
    let mut out = Vec::new();
    for c in 0..CLUSTERS {
        let order = sample(&mut rng, ITEMS_PER_CLUSTER, ITEMS_PER_CLUSTER).into_vec();
        // items are held by popularity rank until the end
        let mut held: Vec<Vec<usize>> = (0..USERS_PER_CLUSTER)
            .map(|_| {
                sample_weighted(
                    &mut rng,
                    ITEMS_PER_CLUSTER,
                    |r| weights[r],
                    INTERACTIONS_PER_USER,
                )
                .expect("positive weights")
                .into_vec()
            })
            .collect();
        let mut count = vec![0usize; ITEMS_PER_CLUSTER];
        for &r in held.iter().flatten() {
            count[r] += 1;
        }
        let takers = sample(&mut rng, USERS_PER_CLUSTER, USERS_PER_CLUSTER).into_vec();
        let unheld: Vec<usize> = (0..ITEMS_PER_CLUSTER).filter(|&r| count[r] == 0).collect();
        for (&r, &k) in unheld.iter().zip(&takers) {
            let slot = (0..INTERACTIONS_PER_USER)
                .filter(|&s| count[held[k][s]] > 1)
                .max_by_key(|&s| held[k][s])
                .expect("a shared item to give up");
            count[held[k][slot]] -= 1;
            held[k][slot] = r;
            count[r] += 1;
        }
        assert!(
            count.iter().all(|&n| n > 0),
            "cluster {c} left items unused"
        );
        for (k, ranks) in held.iter().enumerate() {
            let user = (c * USERS_PER_CLUSTER + k) as u64;
            let tag = (c * TAGS_PER_CLUSTER + k % TAGS_PER_CLUSTER) as u64;
            for &r in ranks {
                let item = (c * ITEMS_PER_CLUSTER + order[r]) as u64;
                out.push(raw(1000 + user, 50_000 + item, 900 + tag));
            }
        }
    }
    out
}

pub fn planted(seed: u64) -> Folksonomy {
    let f = build_folksonomy(&planted_records(seed)).expect("non-empty");
    assert_eq!((f.n_users, f.n_items, f.n_tags), (200, 400, 40));
    f
}

pub fn raw(u: u64, i: u64, t: u64) -> RawAssignment {
    RawAssignment {
        user_id: u,
        item_id: i,
        tag_id: t,
    }
}

/// Writes records as a HetRec-style TSV with a header line.
pub fn write_hetrec(path: &std::path::Path, records: &[RawAssignment]) {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).expect("create data file"));
    writeln!(f, "userID\titemID\ttagID\ttimestamp").unwrap();
    for r in records {
        writeln!(f, "{}\t{}\t{}\t0", r.user_id, r.item_id, r.tag_id).unwrap();
    }
    f.flush().unwrap();
}
