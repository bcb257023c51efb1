use std::collections::VecDeque;

use super::{Edge, IdMaps, InteractionSet};
use crate::{Error, Result};

/// Repeatedly removes users and items with fewer than `k` interactions until
/// every survivor has degree at least `k`. Surviving entities are re-indexed
/// densely, preserving their relative order.
pub fn kcore_filter(set: &InteractionSet, k: usize) -> Result<InteractionSet> {
    if k == 0 {
        return Err(Error::InvalidInput("k-core requires k >= 1".into()));
    }
    let (nu, ni) = (set.n_users(), set.n_items());
    let mut user_deg = vec![0usize; nu];
    let mut item_deg = vec![0usize; ni];
    let mut user_edges = vec![Vec::new(); nu];
    let mut item_edges = vec![Vec::new(); ni];
    for (idx, e) in set.edges.iter().enumerate() {
        user_deg[e.user as usize] += 1;
        item_deg[e.item as usize] += 1;
        user_edges[e.user as usize].push(idx);
        item_edges[e.item as usize].push(idx);
    }

    let mut user_alive = vec![true; nu];
    let mut item_alive = vec![true; ni];
    let mut edge_alive = vec![true; set.edges.len()];

    // node ids: users 0..nu, items nu..nu+ni
    let mut queue: VecDeque<usize> = (0..nu)
        .filter(|&u| user_deg[u] < k)
        .chain((0..ni).filter(|&v| item_deg[v] < k).map(|v| nu + v))
        .collect();

    while let Some(node) = queue.pop_front() {
        if node < nu {
            if !user_alive[node] {
                continue;
            }
            user_alive[node] = false;
            for &eidx in &user_edges[node] {
                if !edge_alive[eidx] {
                    continue;
                }
                edge_alive[eidx] = false;
                let v = set.edges[eidx].item as usize;
                item_deg[v] -= 1;
                if item_alive[v] && item_deg[v] < k {
                    queue.push_back(nu + v);
                }
            }
        } else {
            let v = node - nu;
            if !item_alive[v] {
                continue;
            }
            item_alive[v] = false;
            for &eidx in &item_edges[v] {
                if !edge_alive[eidx] {
                    continue;
                }
                edge_alive[eidx] = false;
                let u = set.edges[eidx].user as usize;
                user_deg[u] -= 1;
                if user_alive[u] && user_deg[u] < k {
                    queue.push_back(u);
                }
            }
        }
    }

    let mut ids = IdMaps::default();
    let mut user_remap = vec![u32::MAX; nu];
    let mut item_remap = vec![u32::MAX; ni];
    for u in (0..nu).filter(|&u| user_alive[u]) {
        user_remap[u] = ids.users.intern(set.ids.users.raw(u as u32));
    }
    for v in (0..ni).filter(|&v| item_alive[v]) {
        item_remap[v] = ids.items.intern(set.ids.items.raw(v as u32));
    }
    let edges: Vec<Edge> = set
        .edges
        .iter()
        .zip(&edge_alive)
        .filter(|(_, &alive)| alive)
        .map(|(e, _)| Edge {
            user: user_remap[e.user as usize],
            item: item_remap[e.item as usize],
            ..e.clone()
        })
        .collect();

    if edges.is_empty() {
        return Err(Error::Empty(format!("{k}-core filtering removed every interaction")));
    }
    Ok(InteractionSet { ids, edges })
}
