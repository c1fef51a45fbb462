//! Graph specs as compact strings, the shared `--graph` syntax.

use lbs_core::graph::Graph;

use crate::Failure;

pub(crate) const FORMS: &str =
    "cycle:N | path:N | star:K | complete:N | regular:N,D | edges:PATH";

/// Builds the graph named by `spec`. Only `regular:` consumes the seed: it
/// draws a random regular graph deterministically from it.
pub(crate) fn build(spec: &str, seed: u64) -> Result<Graph, Failure> {
    let Some((kind, rest)) = spec.split_once(':') else {
        return Err(Failure::input(format!(
            "graph spec {spec:?} has no ':'; expected one of {FORMS}"
        )));
    };
    let g = match kind {
        "cycle" => Graph::cycle(parse_num(spec, rest)?),
        "path" => Graph::path(parse_num(spec, rest)?),
        "star" => Graph::star(parse_num(spec, rest)?),
        "complete" => Graph::complete(parse_num(spec, rest)?),
        "regular" => {
            let Some((n, d)) = rest.split_once(',') else {
                return Err(Failure::input(format!(
                    "graph spec {spec:?}: regular needs N,D"
                )));
            };
            Graph::random_regular(parse_num(spec, n)?, parse_num(spec, d)?, seed)
        }
        "edges" => {
            let text = std::fs::read_to_string(rest)
                .map_err(|e| Failure::input(format!("edge list {rest}: {e}")))?;
            Graph::from_edge_list(&text)
        }
        other => {
            return Err(Failure::input(format!(
                "unknown graph kind {other:?}; expected one of {FORMS}"
            )))
        }
    };
    g.map_err(Failure::from)
}

fn parse_num(spec: &str, token: &str) -> Result<usize, Failure> {
    token.trim().parse().map_err(|_| {
        Failure::input(format!(
            "graph spec {spec:?}: {token:?} is not a positive integer"
        ))
    })
}
