//! Closed-loop chilled-water network: topology, Newton–Raphson flow solve and
//! downstream water-temperature propagation.
//!
//! Flows are solved in the loop-current formulation. A spanning tree of the
//! conducting subgraph is grown from the pump inlet; every chord closes one
//! fundamental loop and carries one unknown loop flow. Branch flows are the
//! signed sums of the loop flows through them, so nodal continuity holds by
//! construction and the Newton system only has to balance head around loops.

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equipment::{FcuParams, PumpParams};
use crate::thermal::ZoneParams;

pub const WATER_DENSITY_KG_M3: f64 = 1000.0;
pub const WATER_SPECIFIC_HEAT_J_KGK: f64 = 4186.0;

const MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 40;
/// Floor on |Q| used only inside Jacobian entries of square-law branches.
const JACOBIAN_FLOW_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydraulicError {
    #[error("network topology error: {0}")]
    Topology(String),
    #[error("hydraulic solve did not converge after {iterations} iterations (residual {residual_kpa:.3e} kPa)")]
    NonConvergence { iterations: usize, residual_kpa: f64 },
    #[error("invalid hydraulic input: {0}")]
    InvalidInput(String),
}

type HResult<T> = std::result::Result<T, HydraulicError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    Pipe,
    FcuCoil { fcu: usize },
    Pump,
    Bypass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: String,
    pub upstream: usize,
    pub downstream: usize,
    /// Square-law coefficient, kPa·s²/m⁶. Ignored for the pump.
    pub resistance: f64,
    pub kind: BranchKind,
}

/// Directed node/branch graph with its incidence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    nodes: Vec<String>,
    branches: Vec<Branch>,
    incidence: Vec<i8>,
    pump: usize,
}

impl NetworkTopology {
    pub fn new(nodes: Vec<String>, branches: Vec<Branch>) -> HResult<Self> {
        let n = nodes.len();
        let mut seen = HashSet::new();
        for id in &nodes {
            if !seen.insert(id.as_str()) {
                return Err(HydraulicError::Topology(format!("duplicate node id `{id}`")));
            }
        }
        seen.clear();
        for b in &branches {
            if !seen.insert(b.id.as_str()) {
                return Err(HydraulicError::Topology(format!("duplicate branch id `{}`", b.id)));
            }
            if b.upstream >= n || b.downstream >= n || b.upstream == b.downstream {
                return Err(HydraulicError::Topology(format!("branch `{}` has invalid endpoints", b.id)));
            }
            if b.kind != BranchKind::Pump && !(b.resistance > 0.0 && b.resistance.is_finite()) {
                return Err(HydraulicError::Topology(format!("branch `{}` needs a positive resistance", b.id)));
            }
        }
        let pumps: Vec<usize> = branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BranchKind::Pump)
            .map(|(i, _)| i)
            .collect();
        if pumps.len() != 1 {
            return Err(HydraulicError::Topology(format!(
                "expected exactly one pump branch, found {}",
                pumps.len()
            )));
        }
        if !branches.iter().any(|b| b.kind == BranchKind::Bypass) {
            return Err(HydraulicError::Topology("network needs a bypass branch".into()));
        }
        let m = branches.len();
        let mut incidence = vec![0i8; n * m];
        for (j, b) in branches.iter().enumerate() {
            incidence[b.upstream * m + j] = 1;
            incidence[b.downstream * m + j] = -1;
        }
        let topo = Self {
            nodes,
            branches,
            incidence,
            pump: pumps[0],
        };
        let all = vec![true; topo.branches.len()];
        if topo.components(&all).len() != 1 {
            return Err(HydraulicError::Topology("network graph is not connected".into()));
        }
        Ok(topo)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn pump_branch(&self) -> usize {
        self.pump
    }

    /// Entry `(node, branch)`: +1 upstream endpoint, −1 downstream, 0 otherwise.
    pub fn incidence(&self, node: usize, branch: usize) -> i8 {
        self.incidence[node * self.branches.len() + branch]
    }

    /// `incidence · flows` per node.
    pub fn nodal_imbalance(&self, flows: &[f64]) -> Vec<f64> {
        (0..self.nodes.len())
            .map(|i| {
                (0..self.branches.len())
                    .map(|j| f64::from(self.incidence(i, j)) * flows[j])
                    .sum()
            })
            .collect()
    }

    pub fn coil_branch(&self, fcu: usize) -> Option<usize> {
        self.branches
            .iter()
            .position(|b| b.kind == BranchKind::FcuCoil { fcu })
    }

    fn is_conducting(&self, j: usize, valve_open: &[bool]) -> bool {
        match self.branches[j].kind {
            BranchKind::FcuCoil { fcu } => valve_open.get(fcu).copied().unwrap_or(false),
            _ => true,
        }
    }

    /// Connected components over nodes touched by the selected branches.
    fn components(&self, active: &[bool]) -> Vec<Vec<usize>> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        let mut touched = vec![false; n];
        for (j, b) in self.branches.iter().enumerate() {
            if active[j] {
                adj[b.upstream].push(b.downstream);
                adj[b.downstream].push(b.upstream);
                touched[b.upstream] = true;
                touched[b.downstream] = true;
            }
        }
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if !touched[start] || seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(u) = queue.pop_front() {
                comp.push(u);
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
            out.push(comp);
        }
        out
    }
}

/// Resistances used when assembling the default network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub supply_header_resistance: f64,
    pub return_header_resistance: f64,
    pub bypass_resistance: f64,
    /// Coil pressure drop at the FCU's rated water flow, kPa.
    pub coil_design_dp_kpa: f64,
    /// Static pressure held at the pump suction, kPa.
    pub reference_pressure_kpa: f64,
    pub supply_temp_c: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            supply_header_resistance: 2.0e6,
            return_header_resistance: 2.0e6,
            bypass_resistance: 4.0e9,
            coil_design_dp_kpa: 40.0,
            reference_pressure_kpa: 150.0,
            supply_temp_c: 7.0,
        }
    }
}

/// Pump → supply header → parallel coils plus bypass → return header → pump.
pub fn build_network(
    zones: &[ZoneParams],
    fcus: &[FcuParams],
    _pump: &PumpParams,
    cfg: &NetworkConfig,
) -> HResult<NetworkTopology> {
    if zones.is_empty() {
        return Err(HydraulicError::Topology("at least one zone is required".into()));
    }
    if fcus.len() != zones.len() {
        return Err(HydraulicError::Topology(format!(
            "{} zones but {} FCUs",
            zones.len(),
            fcus.len()
        )));
    }
    let mut ids = HashSet::new();
    for z in zones {
        if !ids.insert(z.zone_id) {
            return Err(HydraulicError::Topology(format!("duplicate zone id {}", z.zone_id)));
        }
    }
    const PUMP_IN: usize = 0;
    const PUMP_OUT: usize = 1;
    const SUPPLY: usize = 2;
    const RETURN: usize = 3;
    let nodes = ["pump_in", "pump_out", "supply_manifold", "return_manifold"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut branches = vec![
        Branch {
            id: "pump".into(),
            upstream: PUMP_IN,
            downstream: PUMP_OUT,
            resistance: 0.0,
            kind: BranchKind::Pump,
        },
        Branch {
            id: "supply_header".into(),
            upstream: PUMP_OUT,
            downstream: SUPPLY,
            resistance: cfg.supply_header_resistance,
            kind: BranchKind::Pipe,
        },
        Branch {
            id: "return_header".into(),
            upstream: RETURN,
            downstream: PUMP_IN,
            resistance: cfg.return_header_resistance,
            kind: BranchKind::Pipe,
        },
    ];
    for (i, (z, f)) in zones.iter().zip(fcus).enumerate() {
        let r = cfg.coil_design_dp_kpa / (f.rated_water_flow_m3_s * f.rated_water_flow_m3_s);
        branches.push(Branch {
            id: format!("coil_{}", z.zone_id),
            upstream: SUPPLY,
            downstream: RETURN,
            resistance: r,
            kind: BranchKind::FcuCoil { fcu: i },
        });
    }
    branches.push(Branch {
        id: "bypass".into(),
        upstream: SUPPLY,
        downstream: RETURN,
        resistance: cfg.bypass_resistance,
        kind: BranchKind::Bypass,
    });
    NetworkTopology::new(nodes, branches)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicSolution {
    pub branch_flows_m3_s: Vec<f64>,
    pub node_pressures_kpa: Vec<f64>,
    pub pump_flow_m3_s: f64,
    pub pump_head_kpa: f64,
    pub iterations: usize,
    pub residual_kpa: f64,
}

impl HydraulicSolution {
    /// Tabular dump of branch flows and node pressures.
    pub fn to_table(&self, topo: &NetworkTopology) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<18} {:>14} {:>14}", "branch", "flow_m3_s", "dp_kpa");
        for (j, b) in topo.branches().iter().enumerate() {
            let dp = self.node_pressures_kpa[b.upstream] - self.node_pressures_kpa[b.downstream];
            let _ = writeln!(s, "{:<18} {:>14.6e} {:>14.4}", b.id, self.branch_flows_m3_s[j], dp);
        }
        let _ = writeln!(s, "{:<18} {:>14}", "node", "pressure_kpa");
        for (i, n) in topo.nodes().iter().enumerate() {
            let _ = writeln!(s, "{:<18} {:>14.4}", n, self.node_pressures_kpa[i]);
        }
        let _ = writeln!(
            s,
            "pump: {:.6e} m3/s at {:.4} kPa, {} iterations, residual {:.3e} kPa",
            self.pump_flow_m3_s, self.pump_head_kpa, self.iterations, self.residual_kpa
        );
        s
    }
}

/// Fundamental loops of the conducting subgraph, as (branch, sign) lists.
struct LoopBasis {
    loops: Vec<Vec<(usize, f64)>>,
    tree_parent: Vec<Option<(usize, usize)>>,
    order: Vec<usize>,
}

/// Newton–Raphson flow solver. Owns its scratch buffers; one solve at a time.
#[derive(Debug, Clone, Default)]
pub struct HydraulicSolver {
    flows: Vec<f64>,
    loop_flows: Vec<f64>,
}

impl HydraulicSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(
        &mut self,
        topo: &NetworkTopology,
        pump: &PumpParams,
        pump_freq_hz: f64,
        valve_open: &[bool],
        tol_kpa: f64,
        reference_pressure_kpa: f64,
    ) -> HResult<HydraulicSolution> {
        let ratio = pump
            .check_frequency(pump_freq_hz)
            .map_err(|e| HydraulicError::InvalidInput(e.to_string()))?;
        if !(tol_kpa > 0.0) {
            return Err(HydraulicError::InvalidInput("tolerance must be positive".into()));
        }
        let m = topo.branches.len();
        let active: Vec<bool> = (0..m).map(|j| topo.is_conducting(j, valve_open)).collect();
        if !active.iter().enumerate().any(|(j, &a)| a && topo.branches[j].kind == BranchKind::Bypass) {
            return Err(HydraulicError::Topology("no conducting bypass branch".into()));
        }
        if topo.components(&active).len() != 1 {
            return Err(HydraulicError::Topology("conducting subgraph is disconnected".into()));
        }
        let basis = self.loop_basis(topo, &active);
        if !basis.loops.iter().any(|l| l.iter().any(|&(j, _)| j == topo.pump)) {
            return Err(HydraulicError::Topology("pump branch is not part of any closed loop".into()));
        }

        self.flows.clear();
        self.flows.resize(m, 0.0);
        let n_loops = basis.loops.len();

        if ratio == 0.0 {
            let pressures = vec![reference_pressure_kpa; topo.nodes.len()];
            return Ok(HydraulicSolution {
                branch_flows_m3_s: self.flows.clone(),
                node_pressures_kpa: pressures,
                pump_flow_m3_s: 0.0,
                pump_head_kpa: 0.0,
                iterations: 0,
                residual_kpa: 0.0,
            });
        }

        let gain = |j: usize, q: f64| -> f64 {
            let b = &topo.branches[j];
            match b.kind {
                BranchKind::Pump => ratio * ratio * pump.head_rated(q),
                _ => -b.resistance * q * q.abs(),
            }
        };
        let gain_slope = |j: usize, q: f64| -> f64 {
            let b = &topo.branches[j];
            match b.kind {
                BranchKind::Pump => ratio * ratio * pump.head_rated_slope(q),
                _ => -2.0 * b.resistance * q.abs().max(JACOBIAN_FLOW_FLOOR),
            }
        };

        // initial guess: scaled design flow split among pump loops in
        // proportion to chord conductance, as if all chords saw the same drop
        let conductance = |l: &Vec<(usize, f64)>| {
            let r = topo.branches[l[0].0].resistance;
            if r > 0.0 {
                1.0 / r.sqrt()
            } else {
                1.0
            }
        };
        let total_conductance: f64 = basis
            .loops
            .iter()
            .filter(|l| l.iter().any(|&(j, _)| j == topo.pump))
            .map(conductance)
            .sum();
        let total = pump.rated_flow_m3_s * ratio;
        self.loop_flows.clear();
        for l in &basis.loops {
            let sign = l.iter().find(|&&(j, _)| j == topo.pump).map(|&(_, s)| s);
            self.loop_flows.push(match sign {
                Some(s) => s * total * conductance(l) / total_conductance,
                None => 0.0,
            });
        }

        let branch_flows = |loop_flows: &[f64], out: &mut Vec<f64>| {
            out.iter_mut().for_each(|q| *q = 0.0);
            for (k, l) in basis.loops.iter().enumerate() {
                for &(j, s) in l {
                    out[j] += s * loop_flows[k];
                }
            }
        };
        let residuals = |flows: &[f64]| -> Vec<f64> {
            basis
                .loops
                .iter()
                .map(|l| l.iter().map(|&(j, s)| s * gain(j, flows[j])).sum())
                .collect()
        };
        let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, x| a.max(x.abs()));

        let mut flows = std::mem::take(&mut self.flows);
        branch_flows(&self.loop_flows, &mut flows);
        let mut res = residuals(&flows);
        let mut res_norm = norm(&res);
        let mut iterations = 0;
        let mut candidate = vec![0.0; n_loops];
        let mut cand_flows = vec![0.0; m];
        while res_norm > tol_kpa {
            if iterations == MAX_ITERATIONS {
                self.flows = flows;
                return Err(HydraulicError::NonConvergence {
                    iterations,
                    residual_kpa: res_norm,
                });
            }
            iterations += 1;
            let mut jac = DMatrix::<f64>::zeros(n_loops, n_loops);
            for (k, lk) in basis.loops.iter().enumerate() {
                for &(j, sk) in lk {
                    let d = gain_slope(j, flows[j]);
                    for (l, ll) in basis.loops.iter().enumerate() {
                        if let Some(&(_, sl)) = ll.iter().find(|&&(jj, _)| jj == j) {
                            jac[(k, l)] += sk * sl * d;
                        }
                    }
                }
            }
            let rhs = -DVector::from_column_slice(&res);
            let step = jac.lu().solve(&rhs).ok_or_else(|| HydraulicError::NonConvergence {
                iterations,
                residual_kpa: res_norm,
            })?;
            let mut lambda = 1.0;
            let mut halvings = 0;
            loop {
                for k in 0..n_loops {
                    candidate[k] = self.loop_flows[k] + lambda * step[k];
                }
                branch_flows(&candidate, &mut cand_flows);
                let cand_res = residuals(&cand_flows);
                let cand_norm = norm(&cand_res);
                if cand_norm <= res_norm || halvings == MAX_HALVINGS {
                    self.loop_flows.copy_from_slice(&candidate);
                    flows.copy_from_slice(&cand_flows);
                    res = cand_res;
                    res_norm = cand_norm;
                    break;
                }
                lambda *= 0.5;
                halvings += 1;
            }
        }

        // pressures by walking the spanning tree from the pump inlet
        let mut pressures = vec![reference_pressure_kpa; topo.nodes.len()];
        for &node in &basis.order {
            if let Some((branch, from)) = basis.tree_parent[node] {
                let b = &topo.branches[branch];
                let g = gain(branch, flows[branch]);
                pressures[node] = if b.upstream == from {
                    pressures[from] + g
                } else {
                    pressures[from] - g
                };
            }
        }
        let q_pump = flows[topo.pump];
        let solution = HydraulicSolution {
            branch_flows_m3_s: flows.clone(),
            node_pressures_kpa: pressures,
            pump_flow_m3_s: q_pump,
            pump_head_kpa: gain(topo.pump, q_pump),
            iterations,
            residual_kpa: res_norm,
        };
        self.flows = flows;
        Ok(solution)
    }

    fn loop_basis(&self, topo: &NetworkTopology, active: &[bool]) -> LoopBasis {
        let n = topo.nodes.len();
        let root = topo.branches[topo.pump].upstream;
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (j, b) in topo.branches.iter().enumerate() {
            if active[j] {
                incident[b.upstream].push(j);
                incident[b.downstream].push(j);
            }
        }
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut depth = vec![usize::MAX; n];
        let mut in_tree = vec![false; topo.branches.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::from([root]);
        depth[root] = 0;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &j in &incident[u] {
                let b = &topo.branches[j];
                let v = if b.upstream == u { b.downstream } else { b.upstream };
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    parent[v] = Some((j, u));
                    in_tree[j] = true;
                    queue.push_back(v);
                }
            }
        }
        // path from a node up to the root as (branch, +1 if walked along the branch direction)
        let mut loops = Vec::new();
        for (j, b) in topo.branches.iter().enumerate() {
            if !active[j] || in_tree[j] {
                continue;
            }
            // loop: chord u -> v, then tree path v -> u
            let mut lp = vec![(j, 1.0)];
            let (mut a, mut c) = (b.downstream, b.upstream);
            let mut tail = Vec::new();
            while depth[a] > depth[c] {
                let (br, p) = parent[a].expect("tree parent");
                lp.push((br, if topo.branches[br].upstream == a { 1.0 } else { -1.0 }));
                a = p;
            }
            while depth[c] > depth[a] {
                let (br, p) = parent[c].expect("tree parent");
                tail.push((br, if topo.branches[br].upstream == p { 1.0 } else { -1.0 }));
                c = p;
            }
            while a != c {
                let (br, p) = parent[a].expect("tree parent");
                lp.push((br, if topo.branches[br].upstream == a { 1.0 } else { -1.0 }));
                a = p;
                let (br, p) = parent[c].expect("tree parent");
                tail.push((br, if topo.branches[br].upstream == p { 1.0 } else { -1.0 }));
                c = p;
            }
            lp.extend(tail.into_iter().rev());
            loops.push(lp);
        }
        LoopBasis {
            loops,
            tree_parent: parent,
            order,
        }
    }
}

/// Water outlet temperature and heat picked up by a coil whose water side is
/// the minimum-capacity stream.
pub fn coil_outlet_temp(
    t_water_in_c: f64,
    t_air_c: f64,
    water_flow_m3_s: f64,
    effectiveness: f64,
) -> (f64, f64) {
    let c_w = WATER_DENSITY_KG_M3 * WATER_SPECIFIC_HEAT_J_KGK * water_flow_m3_s;
    let dt = t_air_c - t_water_in_c;
    (t_water_in_c + effectiveness * dt, effectiveness * c_w * dt)
}

/// Air-side state of one coil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilState {
    pub t_air_c: f64,
    pub effectiveness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaterTemperatures {
    pub node_temps_c: Vec<f64>,
    pub branch_inlet_c: Vec<f64>,
    pub branch_outlet_c: Vec<f64>,
    /// Heat absorbed by each FCU coil (indexed by FCU), W.
    pub coil_heat_w: Vec<f64>,
    pub supply_temp_c: f64,
    pub return_temp_c: f64,
}

/// Marches water temperatures through the network in the direction of flow.
pub fn propagate_temperatures(
    topo: &NetworkTopology,
    solution: &HydraulicSolution,
    coil_states: &[CoilState],
    supply_temp_c: f64,
) -> HResult<WaterTemperatures> {
    let n = topo.nodes.len();
    let m = topo.branches.len();
    let flows = &solution.branch_flows_m3_s;
    let mut out = WaterTemperatures {
        node_temps_c: vec![supply_temp_c; n],
        branch_inlet_c: vec![supply_temp_c; m],
        branch_outlet_c: vec![supply_temp_c; m],
        coil_heat_w: vec![0.0; coil_states.len()],
        supply_temp_c,
        return_temp_c: supply_temp_c,
    };
    if solution.pump_flow_m3_s == 0.0 {
        return Ok(out);
    }
    let pump = &topo.branches[topo.pump];
    let (pump_in, pump_out) = if solution.pump_flow_m3_s > 0.0 {
        (pump.upstream, pump.downstream)
    } else {
        (pump.downstream, pump.upstream)
    };

    // oriented passive edges carrying flow
    let mut indeg = vec![0usize; n];
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, b) in topo.branches.iter().enumerate() {
        if j == topo.pump || flows[j] == 0.0 {
            continue;
        }
        let (from, to) = if flows[j] > 0.0 {
            (b.upstream, b.downstream)
        } else {
            (b.downstream, b.upstream)
        };
        outgoing[from].push(j);
        incoming[to].push(j);
        indeg[to] += 1;
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut done = vec![false; n];
    let mut visited = 0;
    while let Some(u) = queue.pop_front() {
        visited += 1;
        done[u] = true;
        if u == pump_out {
            out.node_temps_c[u] = supply_temp_c;
        } else if !incoming[u].is_empty() {
            let (mut qt, mut q) = (0.0, 0.0);
            for &j in &incoming[u] {
                let f = flows[j].abs();
                qt += f * out.branch_outlet_c[j];
                q += f;
            }
            out.node_temps_c[u] = qt / q;
        }
        for &j in &outgoing[u] {
            let t_in = out.node_temps_c[u];
            out.branch_inlet_c[j] = t_in;
            out.branch_outlet_c[j] = match topo.branches[j].kind {
                BranchKind::FcuCoil { fcu } => {
                    let state = coil_states.get(fcu).ok_or_else(|| {
                        HydraulicError::InvalidInput(format!("no coil state for FCU {fcu}"))
                    })?;
                    let (t_out, q) = coil_outlet_temp(t_in, state.t_air_c, flows[j].abs(), state.effectiveness);
                    out.coil_heat_w[fcu] = q;
                    t_out
                }
                _ => t_in,
            };
            let to = if flows[j] > 0.0 {
                topo.branches[j].downstream
            } else {
                topo.branches[j].upstream
            };
            indeg[to] -= 1;
            if indeg[to] == 0 {
                queue.push_back(to);
            }
        }
    }
    if visited != n || !done[pump_in] {
        return Err(HydraulicError::Topology(
            "flow field contains a cycle outside the pump".into(),
        ));
    }
    out.return_temp_c = out.node_temps_c[pump_in];
    out.branch_inlet_c[topo.pump] = out.return_temp_c;
    out.branch_outlet_c[topo.pump] = supply_temp_c;
    Ok(out)
}
