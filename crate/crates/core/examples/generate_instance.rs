//! Generates a fulfillment instance, writes it to disk and reads it back.
//!
//! cargo run --release --example generate_instance -- [DIR]

use std::path::PathBuf;

use picard_sim::instgen::{generate_instance, load_instance, save_instance, NetworkGeometry};

fn main() -> picard_sim::Result<()> {
    let dir = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("picard-sim-instance"));

    let instance = generate_instance(10, 200, 2_000, -0.8, 0.8, 1)?;
    let manifest = save_instance(&instance, &dir)?;
    let reloaded = load_instance(&dir)?;
    assert_eq!(reloaded.orders, instance.orders);
    assert_eq!(reloaded.initial, instance.initial);

    let geometry = NetworkGeometry::us_states(instance.nodes())?;
    println!("wrote {} (J={} I={} T={})", dir.display(), manifest.nodes, manifest.products, manifest.horizon);
    for (file, digest) in &manifest.checksums {
        println!("  {file:<14} {}", &digest[..16]);
    }
    let counts = instance.product_counts();
    println!("busiest product has {} orders, quietest {}", counts.iter().max().unwrap(), counts.iter().min().unwrap());
    for (j, name) in geometry.names().iter().enumerate() {
        println!("  node {j:>2} {name:<16} capacity {}", instance.initial.capacity[j]);
    }
    Ok(())
}
