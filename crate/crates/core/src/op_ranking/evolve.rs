//! Day-by-day relation embedding updates through a GRU cell.

use super::Op1Error;
use crate::event_store::DailyGraph;
use crate::nn::{gru_step_backward, gru_step_cached, GruCache, GruParams, Tensor};

/// Entities touching each relation on one day, with multiplicity.
fn participants(graph: &DailyGraph, num_relations: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); num_relations];
    for &(s, r, o, _) in &graph.edges {
        out[r].push(s);
        out[r].push(o);
    }
    out
}

/// Mean entity row per relation; zero rows for absent relations.
fn relation_inputs(h: &Tensor, parts: &[Vec<usize>]) -> Tensor {
    let d = h.cols();
    let mut x = Tensor::zeros(&[parts.len(), d]);
    for (r, ents) in parts.iter().enumerate() {
        if ents.is_empty() {
            continue;
        }
        let w = 1.0 / ents.len() as f64;
        let row = x.row_mut(r);
        for &e in ents {
            for (o, v) in row.iter_mut().zip(h.row(e)) {
                *o += w * v;
            }
        }
    }
    x
}

#[derive(Debug, Clone)]
pub struct EvolveCache {
    steps: Vec<(Vec<Vec<usize>>, GruCache)>,
}

/// Run the GRU over `graphs` (oldest first) with the relation matrix as the
/// hidden state. Each day's input for relation `r` is the mean of `h` over the
/// entities taking part in `r` that day.
pub fn evolve_relations(
    h: &Tensor,
    relations: &Tensor,
    graphs: &[&DailyGraph],
    gru: &GruParams,
) -> Result<(Tensor, EvolveCache), Op1Error> {
    let nr = relations.rows();
    let mut state = relations.clone();
    let mut steps = Vec::with_capacity(graphs.len());
    for g in graphs {
        if let Some(&(_, _, _, uid)) = g.edges.iter().find(|e| e.1 >= nr || e.0 >= h.rows() || e.2 >= h.rows()) {
            return Err(Op1Error::InvalidEdge { uid });
        }
        let parts = participants(g, nr);
        let x = relation_inputs(h, &parts);
        let (next, cache) = gru_step_cached(&x, &state, gru)?;
        steps.push((parts, cache));
        state = next;
    }
    Ok((state, EvolveCache { steps }))
}

/// Accumulates GRU gradients, adds entity-row gradients into `dh`, and
/// returns the gradient for the initial relation matrix.
pub fn evolve_backward(
    cache: &EvolveCache,
    gru: &mut GruParams,
    drel: &Tensor,
    dh: &mut Tensor,
) -> Result<Tensor, Op1Error> {
    let mut grad = drel.clone();
    for (parts, step) in cache.steps.iter().rev() {
        let g = gru_step_backward(step, gru, &grad)?;
        for (r, ents) in parts.iter().enumerate() {
            if ents.is_empty() {
                continue;
            }
            let w = 1.0 / ents.len() as f64;
            let dx = g.dx.row(r).to_vec();
            for &e in ents {
                for (o, v) in dh.row_mut(e).iter_mut().zip(&dx) {
                    *o += w * v;
                }
            }
        }
        grad = g.dh;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, gru_step, Param};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn day(day: u32, edges: &[(usize, usize, usize)]) -> DailyGraph {
        DailyGraph {
            day,
            edges: edges
                .iter()
                .enumerate()
                .map(|(i, &(s, r, o))| (s, r, o, i as u64))
                .collect(),
        }
    }

    #[test]
    fn absent_relation_gets_zero_input_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gru = GruParams::init(3, 3, &mut rng);
        let h = Param::uniform(&[4, 3], 1.0, &mut rng).value;
        let rel = Param::uniform(&[2, 3], 1.0, &mut rng).value;
        let g = [day(0, &[(0, 0, 1)]), day(1, &[(2, 0, 3)])];
        let (out, _) = evolve_relations(&h, &rel, &[&g[0], &g[1]], &gru).unwrap();
        let zero = Tensor::zeros(&[1, 3]);
        let r1 = Tensor::from_rows(&[rel.row(1).to_vec()]).unwrap();
        let once = gru_step(&zero, &r1, &gru).unwrap();
        let twice = gru_step(&zero, &once, &gru).unwrap();
        for j in 0..3 {
            assert!((out.at(1, j) - twice.at(0, j)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_days_compose_manually() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gru = GruParams::init(2, 2, &mut rng);
        let h = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let rel = Tensor::from_rows(&[vec![0.1, -0.2]]).unwrap();
        let g = [day(3, &[(0, 0, 1)]), day(4, &[(2, 0, 2), (0, 0, 2)])];
        let (out, _) = evolve_relations(&h, &rel, &[&g[0], &g[1]], &gru).unwrap();
        let x1 = Tensor::from_rows(&[vec![0.5, 0.5]]).unwrap();
        let x2 = Tensor::from_rows(&[vec![1.75, 1.5]]).unwrap();
        let step1 = gru_step(&x1, &rel, &gru).unwrap();
        let step2 = gru_step(&x2, &step1, &gru).unwrap();
        assert!((out.at(0, 0) - step2.at(0, 0)).abs() < 1e-12);
        assert!((out.at(0, 1) - step2.at(0, 1)).abs() < 1e-12);

        let (single, _) = evolve_relations(&h, &rel, &[&g[0]], &gru).unwrap();
        assert_eq!(single, step1);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, d, nr) = (4, 3, 2);
        let gru = GruParams::init(d, d, &mut rng);
        let g = [
            day(0, &[(0, 0, 1), (2, 1, 3)]),
            day(1, &[(1, 1, 0)]),
            day(2, &[(3, 0, 2), (0, 0, 1)]),
        ];
        let graphs: Vec<&DailyGraph> = g.iter().collect();
        let target = Param::uniform(&[nr, d], 1.0, &mut rng).value;
        let mut params = vec![
            Param::uniform(&[n, d], 1.0, &mut rng),
            Param::uniform(&[nr, d], 1.0, &mut rng),
        ];
        params.extend(gru.params().into_iter().cloned());

        let rebuild = |p: &[Param]| {
            let mut cell = GruParams::zeros(d, d);
            for (dst, src) in cell.params_mut().into_iter().zip(&p[2..]) {
                *dst = src.clone();
            }
            cell
        };
        let loss = |p: &[Param]| {
            let (out, _) = evolve_relations(&p[0].value, &p[1].value, &graphs, &rebuild(p)).unwrap();
            out.data().iter().zip(target.data()).map(|(a, b)| a * b).sum::<f64>()
        };

        let mut cell = rebuild(&params);
        let (_, cache) = evolve_relations(&params[0].value, &params[1].value, &graphs, &cell).unwrap();
        let mut dh = Tensor::zeros(&[n, d]);
        let drel = evolve_backward(&cache, &mut cell, &target, &mut dh).unwrap();
        params[0].grad = dh;
        params[1].grad = drel;
        for (dst, src) in params[2..].iter_mut().zip(cell.params()) {
            dst.grad = src.grad.clone();
        }
        let err = finite_diff_check(loss, &mut params, 1e-4);
        assert!(err <= 1e-4, "evolve err {err}");
    }
}
