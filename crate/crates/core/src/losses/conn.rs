//! Connectivity loss pulling connected edges together and aligning normals.

use nalgebra::Vector3;

use crate::connectivity::EdgeGraph;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scene::{layout_backward, ParamGroup, TriangleSoup};

/// Per-triangle gradients on the three vertices and the normal.
pub type VertexGrads<T> = Vec<([Vector3<T>; 3], Vector3<T>)>;

fn dist_grad<T: Real>(d: &Vector3<T>) -> (T, Vector3<T>) {
    let n = d.norm();
    if n > T::zero() {
        (n, d / n)
    } else {
        (n, Vector3::zeros())
    }
}

/// Sum over connections whose owning triangle is `visible` of
/// `½(|a0 - b0'| + |a1 - b1'|) + (1 - n_a·n_b)`, where `b'` is `b` in its
/// paired order. Gradients reach both triangles of each connection.
///
/// With `eye`, each normal is first flipped to face that point (the
/// renderer's orientation rule), so that coplanar triangles with opposite
/// vertex winding count as aligned. Without it the raw normals are used.
pub fn connectivity_loss<T: Real>(
    soup: &TriangleSoup<T>,
    graph: &EdgeGraph<T>,
    visible: &[bool],
    eye: Option<&Vector3<T>>,
) -> Result<(T, VertexGrads<T>)> {
    graph.check_current(soup)?;
    if visible.len() != soup.count() {
        return Err(Error::Contract("visibility mask does not match the soup".into()));
    }
    let layouts = soup.layouts();
    let half = T::lit(0.5);
    let mut grads = vec![([Vector3::zeros(); 3], Vector3::zeros()); soup.count()];
    let mut loss = T::zero();
    for c in &graph.connections {
        let (ta, tb) = (c.a.tri as usize, c.b.tri as usize);
        if !visible[ta] || tb >= layouts.len() || layouts[ta].degenerate || layouts[tb].degenerate {
            continue;
        }
        let (la, lb) = (&layouts[ta], &layouts[tb]);
        let ea = [c.a.edge as usize, (c.a.edge as usize + 1) % 3];
        let mut eb = [c.b.edge as usize, (c.b.edge as usize + 1) % 3];
        if c.reversed {
            eb.swap(0, 1);
        }
        for k in 0..2 {
            let (d, g) = dist_grad(&(la.vertices[ea[k]] - lb.vertices[eb[k]]));
            loss += half * d;
            grads[ta].0[ea[k]] += g * half;
            grads[tb].0[eb[k]] -= g * half;
        }
        let facing = |l: &crate::scene::VertexLayout<T>| match eye {
            Some(o) if l.normal.dot(&(l.barycenter - o)) > T::zero() => -T::one(),
            _ => T::one(),
        };
        let s = facing(la) * facing(lb);
        loss += T::one() - s * la.normal.dot(&lb.normal);
        grads[ta].1 -= lb.normal * s;
        grads[tb].1 -= la.normal * s;
    }
    Ok((loss, grads))
}

/// Adds `weight ×` the chain-ruled vertex/normal gradients to `soup.grads`.
pub fn apply_vertex_grads<T: Real>(soup: &mut TriangleSoup<T>, grads: &VertexGrads<T>, weight: T) {
    for (i, (gv, gn)) in grads.iter().enumerate() {
        if gv.iter().all(|v| v.iter().all(|x| *x == T::zero())) && gn.iter().all(|x| *x == T::zero()) {
            continue;
        }
        let gv = gv.map(|v| v * weight);
        let (g_mu, g_s, g_q) = layout_backward(&soup.scale_raw(i), &soup.quat(i), &gv, &(gn * weight));
        let gr = &mut soup.grads;
        for k in 0..3 {
            gr.get_mut(ParamGroup::Mu)[3 * i + k] += g_mu[k];
            gr.get_mut(ParamGroup::Scale)[3 * i + k] += g_s[k];
        }
        for k in 0..4 {
            gr.get_mut(ParamGroup::Rotation)[4 * i + k] += g_q[k];
        }
    }
}
