use super::Network;

/// Connected components over in-service branches, as bus positions.
///
/// Islands are listed in order of their lowest bus position, each sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Islands(pub Vec<Vec<usize>>);

impl Islands {
    pub fn count(&self) -> usize {
        self.0.len()
    }

    /// Island containing bus position `i`.
    pub fn of(&self, i: usize) -> &[usize] {
        self.0.iter().find(|isl| isl.binary_search(&i).is_ok()).map(Vec::as_slice).unwrap_or(&[])
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

pub fn check_connectivity(net: &Network) -> Islands {
    let n = net.buses.len();
    let lookup = net.bus_lookup();
    let mut parent: Vec<usize> = (0..n).collect();
    for br in net.branches.iter().filter(|b| b.in_service) {
        let (a, b) = (find(&mut parent, lookup[&br.from]), find(&mut parent, lookup[&br.to]));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    Islands(groups)
}
