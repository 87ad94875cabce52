//! Shared input loading for the subcommands.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use mswqm_core::dynamics::{assemble_model, FullOrderModel};
use mswqm_core::network::{
    parse_hydraulics, parse_network, segmentize, state_index_map, DeviceLayout, HydraulicProfile,
    NetworkGraph, ScenarioConfig, Scheme, SegmentationPlan, StateIndexMap,
};

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Network topology file (TOML).
    #[arg(long)]
    pub network: PathBuf,
    /// Hydraulics file (CSV).
    #[arg(long)]
    pub hydraulics: PathBuf,
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Override the scenario's discretization scheme.
    #[arg(long, value_parser = ["explicit", "implicit"])]
    pub scheme: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub struct LoadedCase {
    pub graph: NetworkGraph,
    pub profile: HydraulicProfile,
    pub scenario: ScenarioConfig,
    pub plan: SegmentationPlan,
    pub layout: DeviceLayout,
    pub map: StateIndexMap,
}

impl InputArgs {
    pub fn load(&self) -> anyhow::Result<LoadedCase> {
        let network_text = std::fs::read_to_string(&self.network)
            .with_context(|| format!("cannot read '{}'", self.network.display()))?;
        let graph = parse_network(&network_text).map_err(mswqm_core::Error::from)?;

        let scenario_text = std::fs::read_to_string(&self.scenario)
            .with_context(|| format!("cannot read '{}'", self.scenario.display()))?;
        let mut scenario =
            ScenarioConfig::parse(&scenario_text, &graph).map_err(mswqm_core::Error::from)?;
        if let Some(scheme) = &self.scheme {
            scenario.scheme = Scheme::parse(scheme).map_err(mswqm_core::Error::from)?;
        }

        let hydraulics_text = std::fs::read_to_string(&self.hydraulics)
            .with_context(|| format!("cannot read '{}'", self.hydraulics.display()))?;
        let profile = parse_hydraulics(&hydraulics_text, &graph, scenario.hydraulic_step_s)
            .map_err(mswqm_core::Error::from)?;

        let diagnostics = mswqm_core::network::validate_hydraulics(&graph, &profile);
        for d in &diagnostics {
            tracing::warn!("hydraulics: {d}");
        }

        let plan =
            segmentize(&graph, &profile, scenario.dt_s).map_err(mswqm_core::Error::from)?;
        let layout = scenario.device_layout(&graph).map_err(mswqm_core::Error::from)?;
        let map = state_index_map(&graph, &plan);
        Ok(LoadedCase {
            graph,
            profile,
            scenario,
            plan,
            layout,
            map,
        })
    }

    pub fn register_inputs(&self, manifest: &mut crate::manifest::RunManifest) -> anyhow::Result<()> {
        manifest.add_input(&self.network)?;
        manifest.add_input(&self.hydraulics)?;
        manifest.add_input(&self.scenario)?;
        if let Some(scheme) = &self.scheme {
            manifest.set("scheme_override", scheme);
        }
        Ok(())
    }
}

impl LoadedCase {
    pub fn assemble(&self) -> anyhow::Result<FullOrderModel> {
        Ok(
            assemble_model(&self.graph, &self.plan, &self.layout, &self.scenario, &self.profile)
                .map_err(mswqm_core::Error::from)?,
        )
    }
}

pub fn ensure_out_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory '{}'", dir.display()))
}
