//! Static minimum-hop routing over a fixed adjacency graph.

use std::collections::VecDeque;

use thiserror::Error;

use crate::frame::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoutingError {
    #[error("no route from node {from} to node {to}")]
    Unreachable { from: NodeId, to: NodeId },
}

/// Undirected neighbour lists, sorted by node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    neighbours: Vec<Vec<NodeId>>,
}

impl Adjacency {
    pub fn new(n: usize) -> Self {
        Adjacency { neighbours: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = Adjacency::new(n);
        for &(a, b) in edges {
            adj.connect(NodeId(a), NodeId(b));
        }
        adj
    }

    pub fn connect(&mut self, a: NodeId, b: NodeId) {
        if a == b {
            return;
        }
        for (x, y) in [(a, b), (b, a)] {
            let list = &mut self.neighbours[x.0];
            if let Err(pos) = list.binary_search(&y) {
                list.insert(pos, y);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    pub fn neighbours(&self, n: NodeId) -> &[NodeId] {
        &self.neighbours[n.0]
    }

    pub fn are_neighbours(&self, a: NodeId, b: NodeId) -> bool {
        self.neighbours[a.0].binary_search(&b).is_ok()
    }

    /// Hop distances from `root` to every node (`None` if unreachable).
    pub fn hop_distances(&self, root: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.len()];
        let mut queue = VecDeque::new();
        dist[root.0] = Some(0);
        queue.push_back(root);
        while let Some(n) = queue.pop_front() {
            let d = dist[n.0].expect("queued nodes have a distance");
            for &m in self.neighbours(n) {
                if dist[m.0].is_none() {
                    dist[m.0] = Some(d + 1);
                    queue.push_back(m);
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteTable {
    n: usize,
    /// Indexed `[node * n + destination]`.
    next_hop: Vec<Option<NodeId>>,
}

impl RouteTable {
    /// Minimum-hop next hops for every pair; ties go to the lowest neighbour id.
    pub fn compute(adj: &Adjacency) -> Self {
        let n = adj.len();
        let mut next_hop = vec![None; n * n];
        for dst in 0..n {
            let dist = adj.hop_distances(NodeId(dst));
            for node in 0..n {
                if node == dst {
                    continue;
                }
                let Some(d) = dist[node] else { continue };
                next_hop[node * n + dst] = adj
                    .neighbours(NodeId(node))
                    .iter()
                    .copied()
                    .find(|m| dist[m.0] == Some(d - 1));
            }
        }
        RouteTable { n, next_hop }
    }

    pub fn next_hop(&self, node: NodeId, dst: NodeId) -> Option<NodeId> {
        self.next_hop[node.0 * self.n + dst.0]
    }

    pub fn require(&self, from: NodeId, to: NodeId) -> Result<(), RoutingError> {
        if from == to || self.next_hop(from, to).is_some() {
            Ok(())
        } else {
            Err(RoutingError::Unreachable { from, to })
        }
    }

    /// Full hop sequence from `from` to `to`, inclusive of both ends.
    pub fn path(&self, from: NodeId, to: NodeId) -> Result<Vec<NodeId>, RoutingError> {
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            cur = self.next_hop(cur, to).ok_or(RoutingError::Unreachable { from, to })?;
            path.push(cur);
            if path.len() > self.n {
                return Err(RoutingError::Unreachable { from, to });
            }
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_routes_through_middle() {
        let adj = Adjacency::from_edges(3, &[(0, 1), (1, 2)]);
        let rt = RouteTable::compute(&adj);
        assert_eq!(rt.next_hop(NodeId(0), NodeId(2)), Some(NodeId(1)));
        assert_eq!(rt.next_hop(NodeId(2), NodeId(0)), Some(NodeId(1)));
        assert_eq!(rt.path(NodeId(0), NodeId(2)).unwrap().len(), 3);
    }

    #[test]
    fn ties_pick_lowest_id() {
        // 0 reaches 3 via 1 or 2
        let adj = Adjacency::from_edges(4, &[(0, 2), (0, 1), (1, 3), (2, 3)]);
        let rt = RouteTable::compute(&adj);
        assert_eq!(rt.next_hop(NodeId(0), NodeId(3)), Some(NodeId(1)));
    }

    #[test]
    fn disconnected_pair_is_an_error() {
        let adj = Adjacency::from_edges(4, &[(0, 1), (2, 3)]);
        let rt = RouteTable::compute(&adj);
        assert_eq!(
            rt.require(NodeId(0), NodeId(3)),
            Err(RoutingError::Unreachable { from: NodeId(0), to: NodeId(3) })
        );
        assert!(rt.path(NodeId(0), NodeId(3)).is_err());
    }
}
