//! The deterministic offline embedder: unit-norm vectors, stable across
//! calls, spread out over the sphere.

use headline_forecast::embed::embed_offline;

fn main() {
    let headlines = [
        "Fed holds rates steady as inflation cools",
        "Fed hikes rates by a quarter point",
        "Oil surges after supply cut",
        "Tech earnings beat expectations",
        "Quiet session ahead of jobs report",
    ];

    let vectors: Vec<_> = headlines
        .iter()
        .map(|h| embed_offline(h, "small", 64, 1))
        .collect();

    for (h, v) in headlines.iter().zip(&vectors) {
        println!("norm {:.12}  {h}", v.norm());
    }

    println!("\npairwise cosine similarity:");
    print!("      ");
    for j in 0..vectors.len() {
        print!("   [{j}] ");
    }
    println!();
    for (i, vi) in vectors.iter().enumerate() {
        print!("  [{i}] ");
        for vj in &vectors {
            print!("{:>7.3}", vi.cosine(vj));
        }
        println!();
    }

    // Same text, same bits; different model or seed, different vector.
    let again = embed_offline(headlines[0], "small", 64, 1);
    assert_eq!(vectors[0], again);
    let other_model = embed_offline(headlines[0], "large", 64, 1);
    println!(
        "\nsame text under another model id: cosine {:.3} (decorrelated)",
        vectors[0].cosine(&other_model)
    );
}
