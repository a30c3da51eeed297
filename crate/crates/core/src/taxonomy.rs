//! Lifecycle model: organizations, phases, actors and data quality parameters.
//!
//! A [`LifecycleLocus`] pins a data quality activity to one of the five valid
//! organization/phase pairs and to an actor that is allowed to act there.
//! Actors live in an [`ActorRegistry`]; the builtin actors are always present
//! and custom actors can only extend the registry.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaxonomyError {
    #[error("phase {phase} does not occur at organization {organization}")]
    InvalidPhaseForOrganization {
        organization: Organization,
        phase: Phase,
    },
    #[error("unknown actor `{0}`")]
    UnknownActor(String),
    #[error("actor `{actor}` is not allowed at {organization}-{phase}")]
    ActorPhaseMismatch {
        organization: Organization,
        phase: Phase,
        actor: String,
    },
    #[error("actor `{0}` is already registered")]
    DuplicateActor(String),
    #[error("alias `{alias}` collides with an existing actor name or alias")]
    AliasCollision { alias: String },
    #[error("actor `{0}` must be allowed in at least one lifecycle phase")]
    EmptyAllowedPhases(String),
    #[error("`{0}` is not a valid identifier (expected an uppercase letter followed by letters or digits)")]
    InvalidIdentifier(String),
    #[error("`{0}` is not a lifecycle phase code")]
    InvalidCode(String),
    #[error("actor `{0}` is builtin and cannot be removed")]
    BuiltinActor(String),
    #[error("invalid registry configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Organization {
    #[serde(rename = "DGO")]
    Dgo,
    #[serde(rename = "DRO")]
    Dro,
}

impl Organization {
    pub const ALL: [Organization; 2] = [Organization::Dgo, Organization::Dro];

    pub fn code(self) -> &'static str {
        match self {
            Organization::Dgo => "DGO",
            Organization::Dro => "DRO",
        }
    }
}

impl fmt::Display for Organization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Organization {
    type Err = TaxonomyError;

    /// Codes are uppercase only.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "DGO" => Ok(Organization::Dgo),
            "DRO" => Ok(Organization::Dro),
            other => Err(TaxonomyError::InvalidCode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    /// Data generation.
    #[serde(rename = "DG")]
    Dg,
    /// Data transformation.
    #[serde(rename = "DT")]
    Dt,
    /// Data reuse.
    #[serde(rename = "DR")]
    Dr,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Dg, Phase::Dt, Phase::Dr];

    pub fn code(self) -> &'static str {
        match self {
            Phase::Dg => "DG",
            Phase::Dt => "DT",
            Phase::Dr => "DR",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Phase {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "DG" => Ok(Phase::Dg),
            "DT" => Ok(Phase::Dt),
            "DR" => Ok(Phase::Dr),
            other => Err(TaxonomyError::InvalidCode(other.to_string())),
        }
    }
}

/// A valid (organization, phase) pair. Only five exist; generation happens
/// exclusively at the data-generating organization.
///
/// Ordering is lifecycle order: DGO-DG < DGO-DT < DGO-DR < DRO-DT < DRO-DR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrgPhase {
    organization: Organization,
    phase: Phase,
}

impl OrgPhase {
    pub const DGO_DG: OrgPhase = OrgPhase { organization: Organization::Dgo, phase: Phase::Dg };
    pub const DGO_DT: OrgPhase = OrgPhase { organization: Organization::Dgo, phase: Phase::Dt };
    pub const DGO_DR: OrgPhase = OrgPhase { organization: Organization::Dgo, phase: Phase::Dr };
    pub const DRO_DT: OrgPhase = OrgPhase { organization: Organization::Dro, phase: Phase::Dt };
    pub const DRO_DR: OrgPhase = OrgPhase { organization: Organization::Dro, phase: Phase::Dr };

    /// All valid pairs in lifecycle order.
    pub const ALL: [OrgPhase; 5] = [
        OrgPhase::DGO_DG,
        OrgPhase::DGO_DT,
        OrgPhase::DGO_DR,
        OrgPhase::DRO_DT,
        OrgPhase::DRO_DR,
    ];

    pub fn new(organization: Organization, phase: Phase) -> Result<Self, TaxonomyError> {
        if organization == Organization::Dro && phase == Phase::Dg {
            return Err(TaxonomyError::InvalidPhaseForOrganization { organization, phase });
        }
        Ok(OrgPhase { organization, phase })
    }

    pub fn organization(self) -> Organization {
        self.organization
    }

    pub fn phase(self) -> Phase {
        self.phase
    }

    /// Position in lifecycle order, 0..5.
    pub fn lifecycle_index(self) -> usize {
        OrgPhase::ALL.iter().position(|p| *p == self).expect("valid pair")
    }
}

impl fmt::Display for OrgPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.organization, self.phase)
    }
}

impl FromStr for OrgPhase {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (org, phase) = s
            .split_once('-')
            .ok_or_else(|| TaxonomyError::InvalidCode(s.to_string()))?;
        OrgPhase::new(org.parse()?, phase.parse()?)
    }
}

impl Serialize for OrgPhase {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OrgPhase {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParameterCategory {
    Intrinsic,
    Contextual,
    SystemTechnical,
}

impl ParameterCategory {
    pub const ALL: [ParameterCategory; 3] = [
        ParameterCategory::Intrinsic,
        ParameterCategory::Contextual,
        ParameterCategory::SystemTechnical,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParameterCategory::Intrinsic => "Intrinsic",
            ParameterCategory::Contextual => "Contextual",
            ParameterCategory::SystemTechnical => "SystemTechnical",
        }
    }
}

impl fmt::Display for ParameterCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a parameter's value is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasurementKind {
    /// Derived from the data by a check.
    Computed,
    /// Supplied as a human statement.
    Attested,
    /// Computed when mapping logs exist, otherwise attested.
    ComputedOrAttested,
}

impl fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeasurementKind::Computed => "Computed",
            MeasurementKind::Attested => "Attested",
            MeasurementKind::ComputedOrAttested => "ComputedOrAttested",
        })
    }
}

/// The nine core data quality parameters.
///
/// Variant order is the stable reporting order: by category, then
/// alphabetical within a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Parameter {
    Completeness,
    Conformance,
    Plausibility,
    Accessibility,
    Governance,
    Relevance,
    Timeliness,
    Interoperability,
    OperatingPlatform,
}

const CORE_PARAMETERS: [Parameter; 9] = [
    Parameter::Completeness,
    Parameter::Conformance,
    Parameter::Plausibility,
    Parameter::Accessibility,
    Parameter::Governance,
    Parameter::Relevance,
    Parameter::Timeliness,
    Parameter::Interoperability,
    Parameter::OperatingPlatform,
];

/// The nine core parameters in stable order.
pub fn core_parameters() -> &'static [Parameter] {
    &CORE_PARAMETERS
}

impl Parameter {
    pub fn name(self) -> &'static str {
        match self {
            Parameter::Completeness => "Completeness",
            Parameter::Conformance => "Conformance",
            Parameter::Plausibility => "Plausibility",
            Parameter::Accessibility => "Accessibility",
            Parameter::Governance => "Governance",
            Parameter::Relevance => "Relevance",
            Parameter::Timeliness => "Timeliness",
            Parameter::Interoperability => "Interoperability",
            Parameter::OperatingPlatform => "OperatingPlatform",
        }
    }

    pub fn from_name(name: &str) -> Option<Parameter> {
        CORE_PARAMETERS.iter().copied().find(|p| p.name() == name)
    }

    pub fn category(self) -> ParameterCategory {
        match self {
            Parameter::Completeness | Parameter::Conformance | Parameter::Plausibility => {
                ParameterCategory::Intrinsic
            }
            Parameter::Accessibility
            | Parameter::Governance
            | Parameter::Relevance
            | Parameter::Timeliness => ParameterCategory::Contextual,
            Parameter::Interoperability | Parameter::OperatingPlatform => {
                ParameterCategory::SystemTechnical
            }
        }
    }

    pub fn measurement_kind(self) -> MeasurementKind {
        match self {
            Parameter::Completeness
            | Parameter::Conformance
            | Parameter::Plausibility
            | Parameter::Timeliness => MeasurementKind::Computed,
            Parameter::Relevance
            | Parameter::Accessibility
            | Parameter::Governance
            | Parameter::OperatingPlatform => MeasurementKind::Attested,
            Parameter::Interoperability => MeasurementKind::ComputedOrAttested,
        }
    }

    /// Interoperability resolves to `Computed` when mapping logs exist.
    pub fn resolved_kind(self, mapping_logs_available: bool) -> MeasurementKind {
        match self.measurement_kind() {
            MeasurementKind::ComputedOrAttested if mapping_logs_available => MeasurementKind::Computed,
            MeasurementKind::ComputedOrAttested => MeasurementKind::Attested,
            kind => kind,
        }
    }

    pub fn accepts_attestation(self) -> bool {
        self.measurement_kind() != MeasurementKind::Computed
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `UPPER (ALNUM)*`, the identifier rule shared by actors and labels.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase()) && chars.all(|c| c.is_ascii_alphanumeric())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Actor {
    pub canonical_name: String,
    pub aliases: BTreeSet<String>,
    pub allowed_phases: BTreeSet<OrgPhase>,
    pub builtin: bool,
}

impl Actor {
    pub fn allows(&self, pair: OrgPhase) -> bool {
        self.allowed_phases.contains(&pair)
    }
}

const DR_PHASES: [OrgPhase; 2] = [OrgPhase::DGO_DR, OrgPhase::DRO_DR];
const DT_PHASES: [OrgPhase; 2] = [OrgPhase::DGO_DT, OrgPhase::DRO_DT];

fn builtin_actors() -> Vec<Actor> {
    let table: [(&str, &[&str], Vec<OrgPhase>); 9] = [
        ("Patient", &[], vec![OrgPhase::DGO_DG]),
        ("Clinician", &[], [&[OrgPhase::DGO_DG][..], &DR_PHASES].concat()),
        ("Wearable", &[], vec![OrgPhase::DGO_DG]),
        ("EHRSystem", &["EHR"], [&[OrgPhase::DGO_DG][..], &DT_PHASES].concat()),
        ("Organization", &["Org"], [&[OrgPhase::DGO_DG][..], &DR_PHASES].concat()),
        ("DataEngineer", &["Engineer"], DT_PHASES.to_vec()),
        ("Researcher", &[], DR_PHASES.to_vec()),
        ("Stakeholder", &[], DR_PHASES.to_vec()),
        ("AIModel", &[], DR_PHASES.to_vec()),
    ];
    table
        .into_iter()
        .map(|(name, aliases, phases)| Actor {
            canonical_name: name.to_string(),
            aliases: aliases.iter().map(|a| a.to_string()).collect(),
            allowed_phases: phases.into_iter().collect(),
            builtin: true,
        })
        .collect()
}

/// Immutable set of actors with alias resolution.
///
/// Builtin actors come first, followed by custom actors in registration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorRegistry {
    actors: Vec<Actor>,
    names: BTreeMap<String, usize>,
}

impl Default for ActorRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ActorRegistry {
    pub fn builtin() -> Self {
        let actors = builtin_actors();
        let mut names = BTreeMap::new();
        for (idx, actor) in actors.iter().enumerate() {
            names.insert(actor.canonical_name.clone(), idx);
            for alias in &actor.aliases {
                names.insert(alias.clone(), idx);
            }
        }
        ActorRegistry { actors, names }
    }

    pub fn actors(&self) -> &[Actor] {
        &self.actors
    }

    /// Looks up an actor by canonical name or alias. Case-sensitive.
    pub fn resolve(&self, name: &str) -> Option<&Actor> {
        self.names.get(name).map(|&idx| &self.actors[idx])
    }

    /// Returns a new registry extended with a custom actor.
    pub fn register_actor(
        &self,
        name: &str,
        aliases: impl IntoIterator<Item = String>,
        allowed_phases: impl IntoIterator<Item = OrgPhase>,
    ) -> Result<ActorRegistry, TaxonomyError> {
        if !is_identifier(name) {
            return Err(TaxonomyError::InvalidIdentifier(name.to_string()));
        }
        if self.names.contains_key(name) {
            return Err(TaxonomyError::DuplicateActor(name.to_string()));
        }
        let aliases: BTreeSet<String> = aliases.into_iter().collect();
        for alias in &aliases {
            if !is_identifier(alias) {
                return Err(TaxonomyError::InvalidIdentifier(alias.clone()));
            }
            if alias == name || self.names.contains_key(alias) {
                return Err(TaxonomyError::AliasCollision { alias: alias.clone() });
            }
        }
        let allowed_phases: BTreeSet<OrgPhase> = allowed_phases.into_iter().collect();
        if allowed_phases.is_empty() {
            return Err(TaxonomyError::EmptyAllowedPhases(name.to_string()));
        }

        let mut next = self.clone();
        let idx = next.actors.len();
        next.names.insert(name.to_string(), idx);
        for alias in &aliases {
            next.names.insert(alias.clone(), idx);
        }
        next.actors.push(Actor {
            canonical_name: name.to_string(),
            aliases,
            allowed_phases,
            builtin: false,
        });
        Ok(next)
    }

    /// Returns a new registry without the named custom actor.
    pub fn remove_actor(&self, name: &str) -> Result<ActorRegistry, TaxonomyError> {
        let actor = self
            .resolve(name)
            .ok_or_else(|| TaxonomyError::UnknownActor(name.to_string()))?;
        if actor.builtin {
            return Err(TaxonomyError::BuiltinActor(actor.canonical_name.clone()));
        }
        let canonical = actor.canonical_name.clone();
        let mut rebuilt = ActorRegistry::builtin();
        for actor in self.actors.iter().filter(|a| !a.builtin && a.canonical_name != canonical) {
            rebuilt = rebuilt.register_actor(
                &actor.canonical_name,
                actor.aliases.iter().cloned(),
                actor.allowed_phases.iter().copied(),
            )?;
        }
        Ok(rebuilt)
    }

    /// Extends the builtin registry from a JSON configuration document of the
    /// form `{"actors": [{"name", "aliases", "allowed_phases": ["DGO-DG", ...]}]}`.
    pub fn from_config_json(bytes: &[u8]) -> Result<ActorRegistry, TaxonomyError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Config {
            actors: Vec<ActorConfig>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct ActorConfig {
            name: String,
            #[serde(default)]
            aliases: Vec<String>,
            allowed_phases: Vec<OrgPhase>,
        }

        let config: Config =
            serde_json::from_slice(bytes).map_err(|e| TaxonomyError::Config(e.to_string()))?;
        let mut registry = ActorRegistry::builtin();
        for actor in config.actors {
            registry = registry.register_actor(&actor.name, actor.aliases, actor.allowed_phases)?;
        }
        Ok(registry)
    }
}

/// A validated (organization, phase, actor) triple. The actor is always the
/// canonical name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LifecycleLocus {
    pair: OrgPhase,
    actor: String,
}

impl LifecycleLocus {
    /// Builds a locus without consulting a registry. The pair is valid by
    /// construction; the actor only needs to be an identifier.
    pub fn unchecked(pair: OrgPhase, actor: impl Into<String>) -> Result<Self, TaxonomyError> {
        let actor = actor.into();
        if !is_identifier(&actor) {
            return Err(TaxonomyError::InvalidIdentifier(actor));
        }
        Ok(LifecycleLocus { pair, actor })
    }

    pub fn org_phase(&self) -> OrgPhase {
        self.pair
    }

    pub fn organization(&self) -> Organization {
        self.pair.organization()
    }

    pub fn phase(&self) -> Phase {
        self.pair.phase()
    }

    pub fn actor(&self) -> &str {
        &self.actor
    }

    /// Re-checks the locus against a registry.
    pub fn check(&self, registry: &ActorRegistry) -> Result<(), TaxonomyError> {
        validate_locus(self.organization(), self.phase(), &self.actor, registry).map(|_| ())
    }
}

impl PartialOrd for LifecycleLocus {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LifecycleLocus {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.pair.cmp(&other.pair).then_with(|| self.actor.cmp(&other.actor))
    }
}

impl fmt::Display for LifecycleLocus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.pair, self.actor)
    }
}

impl FromStr for LifecycleLocus {
    type Err = TaxonomyError;

    /// Structural parse of `ORG-PHASE-Actor`; registry membership is not checked.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, '-');
        let (Some(org), Some(phase), Some(actor)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(TaxonomyError::InvalidCode(s.to_string()));
        };
        LifecycleLocus::unchecked(OrgPhase::new(org.parse()?, phase.parse()?)?, actor)
    }
}

impl Serialize for LifecycleLocus {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LifecycleLocus {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Resolves and validates a locus. The organization/phase pair is checked
/// before the actor, so DRO-DG fails for every actor name.
pub fn validate_locus(
    organization: Organization,
    phase: Phase,
    actor_name: &str,
    registry: &ActorRegistry,
) -> Result<LifecycleLocus, TaxonomyError> {
    let pair = OrgPhase::new(organization, phase)?;
    let actor = registry
        .resolve(actor_name)
        .ok_or_else(|| TaxonomyError::UnknownActor(actor_name.to_string()))?;
    if !actor.allows(pair) {
        return Err(TaxonomyError::ActorPhaseMismatch {
            organization,
            phase,
            actor: actor.canonical_name.clone(),
        });
    }
    Ok(LifecycleLocus { pair, actor: actor.canonical_name.clone() })
}

/// Every valid locus for the registry, in lifecycle order and then registry order.
pub fn enumerate_loci(registry: &ActorRegistry) -> Vec<LifecycleLocus> {
    OrgPhase::ALL
        .iter()
        .flat_map(|&pair| {
            registry
                .actors()
                .iter()
                .filter(move |a| a.allows(pair))
                .map(move |a| LifecycleLocus { pair, actor: a.canonical_name.clone() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn locus(s: &str) -> String {
        s.to_string()
    }

    #[test]
    fn clinician_generates_at_dgo() {
        let reg = ActorRegistry::builtin();
        let l = validate_locus(Organization::Dgo, Phase::Dg, "Clinician", &reg).unwrap();
        assert_eq!(l.to_string(), locus("DGO-DG-Clinician"));
        let w = validate_locus(Organization::Dgo, Phase::Dg, "Wearable", &reg).unwrap();
        assert_eq!(w.to_string(), "DGO-DG-Wearable");
    }

    #[test]
    fn dro_never_generates() {
        let reg = ActorRegistry::builtin();
        for actor in reg.actors() {
            let err = validate_locus(Organization::Dro, Phase::Dg, &actor.canonical_name, &reg);
            assert!(matches!(err, Err(TaxonomyError::InvalidPhaseForOrganization { .. })));
        }
        assert!(matches!(
            validate_locus(Organization::Dro, Phase::Dg, "Nobody", &reg),
            Err(TaxonomyError::InvalidPhaseForOrganization { .. })
        ));
    }

    #[test]
    fn engineer_alias_resolves() {
        let reg = ActorRegistry::builtin();
        let l = validate_locus(Organization::Dro, Phase::Dt, "Engineer", &reg).unwrap();
        assert_eq!(l.to_string(), "DRO-DT-DataEngineer");
        let l = validate_locus(Organization::Dgo, Phase::Dg, "EHR", &reg).unwrap();
        assert_eq!(l.to_string(), "DGO-DG-EHRSystem");
        let l = validate_locus(Organization::Dgo, Phase::Dr, "Org", &reg).unwrap();
        assert_eq!(l.actor(), "Organization");
    }

    #[test]
    fn unknown_and_mismatched_actors() {
        let reg = ActorRegistry::builtin();
        assert_eq!(
            validate_locus(Organization::Dgo, Phase::Dg, "clinician", &reg),
            Err(TaxonomyError::UnknownActor("clinician".into()))
        );
        assert!(matches!(
            validate_locus(Organization::Dgo, Phase::Dg, "Researcher", &reg),
            Err(TaxonomyError::ActorPhaseMismatch { .. })
        ));
    }

    #[test]
    fn canonical_resolution_is_idempotent() {
        let reg = ActorRegistry::builtin();
        for actor in reg.actors() {
            assert_eq!(reg.resolve(&actor.canonical_name).unwrap().canonical_name, actor.canonical_name);
        }
    }

    #[test]
    fn register_carer() {
        let reg = ActorRegistry::builtin()
            .register_actor("Carer", Vec::new(), [OrgPhase::DGO_DG])
            .unwrap();
        let l = validate_locus(Organization::Dgo, Phase::Dg, "Carer", &reg).unwrap();
        assert_eq!(l.to_string(), "DGO-DG-Carer");
        assert!(ActorRegistry::builtin().resolve("Carer").is_none());
    }

    #[test]
    fn register_errors() {
        let reg = ActorRegistry::builtin();
        assert_eq!(
            reg.register_actor("Clinician", Vec::new(), [OrgPhase::DGO_DG]),
            Err(TaxonomyError::DuplicateActor("Clinician".into()))
        );
        assert_eq!(
            reg.register_actor("Engineer", Vec::new(), [OrgPhase::DGO_DT]),
            Err(TaxonomyError::DuplicateActor("Engineer".into()))
        );
        assert_eq!(
            reg.register_actor("Carer", vec!["EHR".to_string()], [OrgPhase::DGO_DG]),
            Err(TaxonomyError::AliasCollision { alias: "EHR".into() })
        );
        assert_eq!(
            reg.register_actor("Carer", Vec::new(), []),
            Err(TaxonomyError::EmptyAllowedPhases("Carer".into()))
        );
        assert!(matches!(
            reg.register_actor("carer", Vec::new(), [OrgPhase::DGO_DG]),
            Err(TaxonomyError::InvalidIdentifier(_))
        ));
    }

    #[test]
    fn ai_model_is_builtin_reuse_actor() {
        let reg = ActorRegistry::builtin();
        assert_eq!(
            reg.register_actor("AIModel", Vec::new(), DR_PHASES),
            Err(TaxonomyError::DuplicateActor("AIModel".into()))
        );
        let reg = reg
            .register_actor("DecisionSupportTool", Vec::new(), DR_PHASES)
            .unwrap();
        assert!(validate_locus(Organization::Dro, Phase::Dr, "DecisionSupportTool", &reg).is_ok());
    }

    #[test]
    fn core_parameter_table() {
        let params = core_parameters();
        assert_eq!(params.len(), 9);
        assert_eq!(params[0], Parameter::Completeness);
        assert_eq!(Parameter::Completeness.category(), ParameterCategory::Intrinsic);
        assert_eq!(Parameter::Governance.measurement_kind(), MeasurementKind::Attested);
        // stable order: category first, alphabetical within
        let mut sorted = params.to_vec();
        sorted.sort_by(|a, b| a.category().cmp(&b.category()).then(a.name().cmp(b.name())));
        assert_eq!(sorted, params);
        assert_eq!(Parameter::Interoperability.resolved_kind(true), MeasurementKind::Computed);
        assert_eq!(Parameter::Interoperability.resolved_kind(false), MeasurementKind::Attested);
    }

    #[test]
    fn enumerate_builtin() {
        let reg = ActorRegistry::builtin();
        let loci = enumerate_loci(&reg);
        let pairs: BTreeSet<OrgPhase> = loci.iter().map(|l| l.org_phase()).collect();
        assert_eq!(pairs.len(), 5);
        assert!(loci.iter().any(|l| l.to_string() == "DGO-DG-EHRSystem"));
        let dro_dr: Vec<&str> = loci
            .iter()
            .filter(|l| l.org_phase() == OrgPhase::DRO_DR)
            .map(|l| l.actor())
            .collect();
        for actor in ["Clinician", "Researcher", "Stakeholder", "AIModel"] {
            assert!(dro_dr.contains(&actor), "{actor} missing from DRO-DR");
        }
    }

    #[test]
    fn config_extends_registry() {
        let json = br#"{"actors": [{"name": "Carer", "aliases": ["FamilyCarer"], "allowed_phases": ["DGO-DG"]}]}"#;
        let reg = ActorRegistry::from_config_json(json).unwrap();
        assert_eq!(reg.resolve("FamilyCarer").unwrap().canonical_name, "Carer");

        let redefine = br#"{"actors": [{"name": "Clinician", "allowed_phases": ["DGO-DG"]}]}"#;
        assert!(matches!(
            ActorRegistry::from_config_json(redefine),
            Err(TaxonomyError::DuplicateActor(_))
        ));
        let bad_pair = br#"{"actors": [{"name": "Carer", "allowed_phases": ["DRO-DG"]}]}"#;
        assert!(matches!(ActorRegistry::from_config_json(bad_pair), Err(TaxonomyError::Config(_))));
    }

    #[test]
    fn remove_restores_enumeration() {
        let base = ActorRegistry::builtin();
        let extended = base
            .register_actor("Carer", Vec::new(), [OrgPhase::DGO_DG])
            .unwrap();
        assert_ne!(enumerate_loci(&extended), enumerate_loci(&base));
        let restored = extended.remove_actor("Carer").unwrap();
        assert_eq!(enumerate_loci(&restored), enumerate_loci(&base));
        assert!(matches!(base.remove_actor("Clinician"), Err(TaxonomyError::BuiltinActor(_))));
    }

    #[test]
    fn locus_strings_parse_structurally() {
        let l: LifecycleLocus = "DRO-DT-DataEngineer".parse().unwrap();
        assert_eq!(l.org_phase(), OrgPhase::DRO_DT);
        assert!("DRO-DG-Clinician".parse::<LifecycleLocus>().is_err());
        assert!("dgo-DG-Clinician".parse::<LifecycleLocus>().is_err());
        let mut sorted: Vec<OrgPhase> = OrgPhase::ALL.iter().rev().copied().collect();
        sorted.sort();
        assert_eq!(sorted, OrgPhase::ALL);
    }
}
