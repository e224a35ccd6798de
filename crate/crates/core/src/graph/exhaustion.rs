use super::{lattice_box, Graph, GraphError, LatticeSpec, NodeId};

/// Growing family `V₁ ⊊ V₂ ⊊ …` of node sets of an ambient graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustionFamily {
    ambient: Graph,
    subsets: Vec<Vec<NodeId>>,
}

impl ExhaustionFamily {
    /// Validates nonemptiness, strict growth and that the last level covers
    /// `target`. Each subset is stored sorted.
    pub fn new(
        ambient: Graph,
        subsets: Vec<Vec<NodeId>>,
        target: &[NodeId],
    ) -> Result<Self, GraphError> {
        if subsets.is_empty() {
            return Err(GraphError::InvalidParameter(
                "exhaustion needs at least one level".into(),
            ));
        }
        let mut prev: Option<Vec<bool>> = None;
        let mut sorted = Vec::with_capacity(subsets.len());
        for (level, mut s) in subsets.into_iter().enumerate() {
            if s.is_empty() {
                return Err(GraphError::InvalidParameter(format!(
                    "level {level} is empty"
                )));
            }
            let mask = ambient.mask(&s)?;
            s.sort();
            s.dedup();
            if let Some(p) = &prev {
                let contains = p.iter().zip(&mask).all(|(&a, &b)| !a || b);
                let grows = p.iter().zip(&mask).any(|(&a, &b)| !a && b);
                if !(contains && grows) {
                    return Err(GraphError::InvalidParameter(format!(
                        "level {level} does not strictly contain level {}",
                        level - 1
                    )));
                }
            }
            prev = Some(mask);
            sorted.push(s);
        }
        let last = prev.expect("at least one level");
        for &v in target {
            ambient.check_node(v)?;
            if !last[v.0] {
                return Err(GraphError::InvalidParameter(format!(
                    "target node `{}` is not covered",
                    ambient.id(v)
                )));
            }
        }
        Ok(Self {
            ambient,
            subsets: sorted,
        })
    }

    /// Centered sub-boxes of side `sizes[k]` inside a halo-equipped lattice
    /// box of the largest side. All sizes must share parity so the boxes are
    /// concentric.
    pub fn lattice(d: usize, sizes: &[usize]) -> Result<Self, GraphError> {
        let &outer = sizes
            .iter()
            .max()
            .ok_or_else(|| GraphError::InvalidParameter("no sizes given".into()))?;
        if sizes.iter().any(|&s| (outer - s) % 2 != 0) {
            return Err(GraphError::InvalidParameter(
                "box sides must share parity to be concentric".into(),
            ));
        }
        let ambient = lattice_box(&LatticeSpec::new(d, outer, true))?;
        let subsets: Vec<Vec<NodeId>> = sizes
            .iter()
            .map(|&s| {
                let lo = ((outer - s) / 2) as i64;
                let hi = lo + s as i64;
                ambient
                    .nodes()
                    .filter(|&v| {
                        ambient
                            .coordinates(v)
                            .is_some_and(|c| c.iter().all(|&x| x >= lo && x < hi))
                    })
                    .collect()
            })
            .collect();
        let target: Vec<NodeId> = ambient.nodes().collect();
        Self::new(ambient, subsets, &target)
    }

    pub fn ambient(&self) -> &Graph {
        &self.ambient
    }

    pub fn levels(&self) -> usize {
        self.subsets.len()
    }

    pub fn subset(&self, level: usize) -> &[NodeId] {
        &self.subsets[level]
    }

    pub fn subsets(&self) -> &[Vec<NodeId>] {
        &self.subsets
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::path;

    #[test]
    fn concentric_windows() {
        let fam = ExhaustionFamily::lattice(1, &[11, 21, 41]).unwrap();
        assert_eq!(fam.levels(), 3);
        assert_eq!(fam.subset(0).len(), 11);
        assert_eq!(fam.ambient().node_count(), 41);
        let c = fam.ambient().node("20").unwrap();
        assert!(fam.subsets().iter().all(|s| s.contains(&c)));
        assert!(ExhaustionFamily::lattice(1, &[10, 21]).is_err());
    }

    #[test]
    fn rejects_non_growing_levels() {
        let g = path(4).unwrap();
        let a = vec![NodeId(0), NodeId(1)];
        assert!(ExhaustionFamily::new(g.clone(), vec![a.clone(), a.clone()], &[]).is_err());
        assert!(
            ExhaustionFamily::new(g.clone(), vec![a.clone(), vec![NodeId(2), NodeId(3)]], &[])
                .is_err()
        );
        assert!(ExhaustionFamily::new(g.clone(), vec![vec![]], &[]).is_err());
        assert!(ExhaustionFamily::new(g.clone(), vec![a.clone()], &[NodeId(3)]).is_err());
        assert!(ExhaustionFamily::new(
            g,
            vec![a, vec![NodeId(0), NodeId(1), NodeId(2)]],
            &[NodeId(2)]
        )
        .is_ok());
    }
}
