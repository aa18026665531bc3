//! Hand-crafted relevance features: BM25, TF-IDF and document length,
//! with corpus statistics and z-score normalization.
//!
//! Run: `cargo run -p corank --example bm25_features`

use corank::features::{
    bm25, feature_vector, tf_idf, Bm25Params, CorpusStats, NormStats,
};

fn doc(words: &[&str]) -> Vec<String> {
    words.iter().map(|s| s.to_string()).collect()
}

fn main() {
    let corpus = vec![
        doc(&["okapi", "ranking", "function", "for", "retrieval"]),
        doc(&["probabilistic", "retrieval", "model"]),
        doc(&["neural", "ranking", "with", "attention"]),
        doc(&["inverse", "document", "frequency", "weighting"]),
    ];
    let stats = CorpusStats::from_documents(&corpus);
    println!(
        "corpus: {} documents, average length {:.2} tokens",
        stats.doc_count(),
        stats.avg_doc_len()
    );
    println!("df(ranking) = {}", stats.doc_freq("ranking"));

    let query = doc(&["ranking", "retrieval"]);
    let params = Bm25Params::default();
    println!("\nquery {query:?} scored against each document:");
    for d in &corpus {
        println!(
            "  bm25 = {:>7.4}  tf-idf = {:>7.4}  {:?}",
            bm25(&query, d, &stats, params.k1, params.b),
            tf_idf(&query, d, &stats),
            d.join(" ")
        );
    }

    // Feature vectors are (length, bm25, tf_idf); training fits a
    // z-score normalizer that evaluation reuses.
    let raw: Vec<_> = corpus
        .iter()
        .map(|d| feature_vector(&query, d, &stats, params.k1, params.b, None))
        .collect();
    let norm = NormStats::fit(&raw);
    println!("\nnormalized feature vectors:");
    for (d, r) in corpus.iter().zip(&raw) {
        let z = norm.apply(*r);
        println!(
            "  [{:>6.3} {:>6.3} {:>6.3}]  {:?}",
            z.length,
            z.bm25,
            z.tf_idf,
            d.join(" ")
        );
    }
}
