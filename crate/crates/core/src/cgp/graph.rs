use serde::{Deserialize, Serialize};

use crate::cgp::Genotype;
use crate::error::{Error, Result};
use crate::image::{ensure_same_dims, Image2D};
use crate::imgops::FunctionLibrary;

/// One reachable functional node. Only the connections and parameters the
/// function actually reads are kept.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActiveNode {
    pub address: u32,
    pub function: u32,
    pub inputs: Vec<u32>,
    pub params: Vec<u8>,
}

/// The executable phenotype: active nodes in increasing address order
/// (a topological order, since edges always point to lower addresses).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActiveGraph {
    pub iota: usize,
    pub nodes: Vec<ActiveNode>,
    pub outputs: Vec<u32>,
}

impl ActiveGraph {
    pub fn active_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Keeps the nodes reachable backwards from the outputs.
pub fn decode(genotype: &Genotype, library: &FunctionLibrary) -> Result<ActiveGraph> {
    genotype.validate(library)?;
    let iota = genotype.iota();
    let eta = genotype.eta();
    let mut active = vec![false; eta];
    let outputs: Vec<u32> = (0..genotype.outputs())
        .map(|k| genotype.output_address(k))
        .collect();
    for &addr in &outputs {
        if addr as usize > iota {
            active[addr as usize - iota - 1] = true;
        }
    }
    for row in (0..eta).rev() {
        if !active[row] {
            continue;
        }
        let f = library
            .get(genotype.function(row))
            .expect("validated function id");
        for &c in &genotype.connections(row)[..f.arity] {
            if c as usize > iota {
                active[c as usize - iota - 1] = true;
            }
        }
    }
    let nodes = (0..eta)
        .filter(|&row| active[row])
        .map(|row| {
            let f = library.get(genotype.function(row)).expect("validated");
            ActiveNode {
                address: genotype.address_of(row),
                function: f.id,
                inputs: genotype.connections(row)[..f.arity].to_vec(),
                params: genotype.params(row)[..f.param_count()]
                    .iter()
                    .map(|&p| p as u8)
                    .collect(),
            }
        })
        .collect();
    Ok(ActiveGraph {
        iota,
        nodes,
        outputs,
    })
}

fn check_channels(iota: usize, channels: &[Image2D]) -> Result<()> {
    if channels.len() != iota {
        return Err(Error::Input(format!(
            "graph expects {iota} input channels, got {}",
            channels.len()
        )));
    }
    for w in channels.windows(2) {
        ensure_same_dims(w[0].dims(), w[1].dims())?;
    }
    Ok(())
}

/// Evaluates the active nodes in order and returns the images at the output
/// addresses.
pub fn execute(
    graph: &ActiveGraph,
    channels: &[Image2D],
    library: &FunctionLibrary,
) -> Result<Vec<Image2D>> {
    check_channels(graph.iota, channels)?;
    let iota = graph.iota;
    let slots = graph.nodes.last().map_or(0, |n| n.address as usize - iota);
    let mut computed: Vec<Option<Image2D>> = vec![None; slots];
    for node in &graph.nodes {
        let f = library
            .get(node.function)
            .ok_or_else(|| Error::Input(format!("unknown function id {}", node.function)))?;
        let inputs: Vec<&Image2D> = node
            .inputs
            .iter()
            .map(|&a| {
                let a = a as usize;
                if a <= iota {
                    &channels[a - 1]
                } else {
                    computed[a - iota - 1]
                        .as_ref()
                        .expect("inputs precede their consumers")
                }
            })
            .collect();
        let out = f.apply(&inputs, &node.params)?;
        computed[node.address as usize - iota - 1] = Some(out);
    }
    Ok(graph
        .outputs
        .iter()
        .map(|&a| {
            let a = a as usize;
            if a <= iota {
                channels[a - 1].clone()
            } else {
                computed[a - iota - 1].clone().expect("outputs are active")
            }
        })
        .collect())
}

/// Pixelwise mean of each heuristic across z-sections, rounded half up.
pub fn aggregate(sections: &[Vec<Image2D>]) -> Result<Vec<Image2D>> {
    let first = sections
        .first()
        .ok_or_else(|| Error::Input("cannot aggregate an empty list of sections".into()))?;
    if sections.len() == 1 {
        return Ok(first.clone());
    }
    let o = first.len();
    let dims = first.first().map(|i| i.dims()).unwrap_or((0, 0));
    for s in sections {
        if s.len() != o {
            return Err(Error::Input(format!(
                "sections disagree on heuristic count: {} vs {o}",
                s.len()
            )));
        }
        for img in s {
            ensure_same_dims(img.dims(), dims)?;
        }
    }
    let n = sections.len() as u64;
    Ok((0..o)
        .map(|c| {
            let mut sum = vec![0u64; dims.0 * dims.1];
            for s in sections {
                for (acc, &v) in sum.iter_mut().zip(s[c].as_slice()) {
                    *acc += v as u64;
                }
            }
            let data = sum
                .into_iter()
                .map(|s| ((2 * s + n) / (2 * n)).min(255) as u8)
                .collect();
            Image2D::from_vec(dims.0, dims.1, data).expect("length preserved")
        })
        .collect())
}
