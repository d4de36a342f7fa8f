//! JSONL graph import: parsing must never panic, and any accepted graph
//! must re-export to a fixed point (export . import . export == export).

#![no_main]

use libfuzzer_sys::fuzz_target;
use litkg::graph::{export_graph, import_graph_str, GraphFormat};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(graph) = import_graph_str(text, GraphFormat::Jsonl) {
        let exported = export_graph(&graph, GraphFormat::Jsonl);
        let again =
            import_graph_str(&exported, GraphFormat::Jsonl).expect("exported graphs reimport");
        assert_eq!(graph.stats(), again.stats());
        assert_eq!(exported, export_graph(&again, GraphFormat::Jsonl));
    }
});
