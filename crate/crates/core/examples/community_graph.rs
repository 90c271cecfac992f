//! Builds the community graph of one scan and prints its structure.

use dnl::fingerprint::WapIndex;
use dnl::graph::{build_graph, fit_normalization};
use dnl::neighborhood::select_neighbors;
use dnl::synth::{generate, RadioMapConfig};

fn main() -> dnl::Result<()> {
    let cfg = RadioMapConfig { n_fps: 200, n_waps: 20, width: 40.0, height: 30.0, seed: 1, ..Default::default() };
    let fps = generate(&cfg)?.fingerprints;
    let (refs, targets) = fps.split_at(199);
    let index = WapIndex::build(refs);
    let norm = fit_normalization(refs)?;

    let community = select_neighbors(&targets[0], refs, 5, &index)?;
    for n in &community.neighbors {
        println!("neighbor fp {:>3} at distance {:6.1}", n.fp.fp_id, n.distance);
    }
    let g = build_graph(&community, &norm, &index, false);
    println!(
        "{} fingerprint nodes, {} WAP nodes, {} edges",
        g.fp_nodes.len(),
        g.wap_nodes.len(),
        g.edges.len()
    );
    for e in g.edges.iter().filter(|e| e.fp_node == 0) {
        let wap = &g.wap_nodes[e.wap_node - g.fp_nodes.len()];
        println!("target -- WAP #{:<3} weight {:.3}", wap.mac_index, e.weight);
    }
    println!("{}", serde_json::to_string_pretty(&g.to_dump()).unwrap());
    Ok(())
}
