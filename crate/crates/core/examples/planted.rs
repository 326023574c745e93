//! Writes a planted dataset to disk.
//!
//! ```text
//! cargo run -p rmbrec --example planted -- learnability 0 data/planted
//! ```

use rmbrec::dataset::write_dataset;
use rmbrec::synthetic::{planted_dataset, PlantedSpec};

fn main() -> rmbrec::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [kind, seed, out] = args.as_slice() else {
        eprintln!("usage: planted <learnability|alignment> <seed> <out-dir>");
        std::process::exit(1);
    };
    let seed: u64 = seed.parse().map_err(|_| rmbrec::Error::Config(format!("bad seed '{seed}'")))?;
    let spec = match kind.as_str() {
        "learnability" => PlantedSpec::learnability(seed),
        "alignment" => PlantedSpec::alignment(seed),
        other => return Err(rmbrec::Error::Config(format!("unknown fixture '{other}'"))),
    };
    let ds = planted_dataset(&spec)?;
    write_dataset(&ds, out)?;
    println!("{} users, {} items, {} edges -> {out}", ds.num_users(), ds.num_items(), ds.total_edges());
    Ok(())
}
