//! GraphML, DOT and JSON renderings of a [`MapperGraph`].

use std::fmt::Write as _;

use super::MapperGraph;
use crate::error::{Error, Result};

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn to_graphml(graph: &MapperGraph) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n");
    for (id, name, ty) in [
        ("d0", "size", "int"),
        ("d1", "dominant_label", "int"),
        ("d2", "purity", "double"),
        ("d3", "mean_truth_conf", "double"),
        ("d4", "members", "string"),
    ] {
        let _ = writeln!(
            out,
            "  <key id=\"{id}\" for=\"node\" attr.name=\"{name}\" attr.type=\"{ty}\"/>"
        );
    }
    out.push_str("  <key id=\"d5\" for=\"edge\" attr.name=\"shared\" attr.type=\"int\"/>\n");
    out.push_str("  <graph id=\"mapper\" edgedefault=\"undirected\">\n");
    for v in &graph.vertices {
        let _ = writeln!(out, "    <node id=\"n{}\">", v.id);
        let _ = writeln!(out, "      <data key=\"d0\">{}</data>", v.size);
        let _ = writeln!(out, "      <data key=\"d1\">{}</data>", v.dominant_label);
        let _ = writeln!(out, "      <data key=\"d2\">{}</data>", v.purity);
        let _ = writeln!(out, "      <data key=\"d3\">{}</data>", v.mean_truth_conf);
        let _ = writeln!(
            out,
            "      <data key=\"d4\">{}</data>",
            xml_escape(&v.members.join(" "))
        );
        out.push_str("    </node>\n");
    }
    for (k, e) in graph.edges.iter().enumerate() {
        let _ = writeln!(
            out,
            "    <edge id=\"e{k}\" source=\"n{}\" target=\"n{}\"><data key=\"d5\">{}</data></edge>",
            e.source, e.target, e.shared
        );
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

pub fn to_dot(graph: &MapperGraph) -> String {
    let mut out = String::from("graph mapper {\n");
    for v in &graph.vertices {
        let _ = writeln!(
            out,
            "  n{} [size={}, dominant_label={}, purity={}, mean_truth_conf={}];",
            v.id, v.size, v.dominant_label, v.purity, v.mean_truth_conf
        );
    }
    for e in &graph.edges {
        let _ = writeln!(out, "  n{} -- n{} [shared={}];", e.source, e.target, e.shared);
    }
    out.push_str("}\n");
    out
}

pub fn to_json(graph: &MapperGraph) -> Result<String> {
    serde_json::to_string_pretty(graph).map_err(|e| Error::Serialize(e.to_string()))
}

pub fn from_json(text: &str) -> Result<MapperGraph> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::{Edge, Vertex};

    fn tiny() -> MapperGraph {
        let v = |id: usize, label: usize| Vertex {
            id,
            cell: vec![label, 0],
            cluster: 0,
            members: vec![format!("r{id}"), "<shared>".into()],
            size: 2,
            dominant_label: label,
            purity: 1.0,
            mean_truth_conf: 0.75,
        };
        MapperGraph {
            vertices: vec![v(0, 0), v(1, 0)],
            edges: vec![Edge {
                source: 0,
                target: 1,
                shared: 1,
            }],
        }
    }

    #[test]
    fn json_round_trip() {
        let g = tiny();
        assert_eq!(from_json(&to_json(&g).unwrap()).unwrap(), g);
    }

    #[test]
    fn graphml_escapes_and_lists_attributes() {
        let text = to_graphml(&tiny());
        assert!(text.contains("attr.name=\"dominant_label\""));
        assert!(text.contains("&lt;shared&gt;"));
        assert!(text.contains("<edge id=\"e0\" source=\"n0\" target=\"n1\">"));
    }

    #[test]
    fn dot_lists_edges() {
        let text = to_dot(&tiny());
        assert!(text.starts_with("graph mapper {"));
        assert!(text.contains("n0 -- n1 [shared=1];"));
        assert!(text.contains("mean_truth_conf=0.75"));
    }
}
