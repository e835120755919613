//! Catalogue of the studied software metrics.
//!
//! Holds the 65-metric schema used by release-level defect datasets (54 code,
//! 5 process, 6 ownership metrics) together with the vocabulary needed to
//! turn a rule condition into a sentence: a noun phrase, a unit and whether
//! the metric counts things or is a continuous ratio.

use serde::{Deserialize, Serialize};

/// Granularity or dimension a metric belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricGroup {
    Code,
    ClassLevel,
    MethodLevel,
    Process,
    Ownership,
}

/// How bounds on a metric are rounded when rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    /// Whole numbers of things (lines, developers, ...).
    Count,
    /// Proportions, averages and other continuous values.
    Ratio,
}

#[derive(Debug, Clone, Copy)]
pub struct MetricInfo {
    pub name: &'static str,
    pub group: MetricGroup,
    pub phrase: &'static str,
    pub unit: &'static str,
    pub kind: ValueKind,
    pub aliases: &'static [&'static str],
}

const fn m(
    name: &'static str,
    group: MetricGroup,
    phrase: &'static str,
    unit: &'static str,
    kind: ValueKind,
    aliases: &'static [&'static str],
) -> MetricInfo {
    MetricInfo { name, group, phrase, unit, kind, aliases }
}

use MetricGroup::{ClassLevel, Code, MethodLevel, Ownership, Process};
use ValueKind::{Count, Ratio};

pub const STUDIED_METRICS: [MetricInfo; 65] = [
    m("AvgCyclomatic", Code, "the average cyclomatic complexity", "", Ratio, &[]),
    m("AvgCyclomaticModified", Code, "the average modified cyclomatic complexity", "", Ratio, &[]),
    m("AvgCyclomaticStrict", Code, "the average strict cyclomatic complexity", "", Ratio, &[]),
    m("AvgEssential", Code, "the average essential complexity", "", Ratio, &[]),
    m("AvgLine", Code, "the average number of lines per function", "lines", Ratio, &[]),
    m("AvgLineBlank", Code, "the average number of blank lines per function", "lines", Ratio, &[]),
    m("AvgLineCode", Code, "the average number of code lines per function", "lines", Ratio, &[]),
    m("AvgLineComment", Code, "the average number of comment lines per function", "lines", Ratio, &[]),
    m("CountDeclClass", Code, "the number of declared classes", "classes", Count, &[]),
    m("CountDeclClassMethod", Code, "the number of class methods", "methods", Count, &[]),
    m("CountDeclClassVariable", Code, "the number of class variables", "variables", Count, &[]),
    m("CountDeclFunction", Code, "the number of declared functions", "functions", Count, &[]),
    m("CountDeclInstanceMethod", Code, "the number of instance methods", "methods", Count, &[]),
    m("CountDeclInstanceVariable", Code, "the number of instance variables", "variables", Count, &[]),
    m("CountDeclMethod", Code, "the number of declared methods", "methods", Count, &[]),
    m("CountDeclMethodDefault", Code, "the number of default-visibility methods", "methods", Count, &[]),
    m("CountDeclMethodPrivate", Code, "the number of private methods", "methods", Count, &[]),
    m("CountDeclMethodProtected", Code, "the number of protected methods", "methods", Count, &[]),
    m("CountDeclMethodPublic", Code, "the number of public methods", "methods", Count, &[]),
    m("CountLine", Code, "the number of lines", "lines", Count, &["LOC"]),
    m("CountLineBlank", Code, "the number of blank lines", "lines", Count, &["LOCBlank"]),
    m("CountLineCode", Code, "the number of code lines", "lines", Count, &["LOCCode"]),
    m(
        "CountLineCodeDecl",
        Code,
        "the number of class and method declaration lines",
        "lines",
        Count,
        &["LOCDeclaration"],
    ),
    m("CountLineCodeExe", Code, "the number of executable code lines", "lines", Count, &["LOCExecutable"]),
    m("CountLineComment", Code, "the number of comment lines", "lines", Count, &["LOCComment"]),
    m("CountSemicolon", Code, "the number of semicolons", "semicolons", Count, &[]),
    m("CountStmt", Code, "the number of statements", "statements", Count, &[]),
    m("CountStmtDecl", Code, "the number of declarative statements", "statements", Count, &[]),
    m("CountStmtExe", Code, "the number of executable statements", "statements", Count, &[]),
    m("MaxCyclomatic", Code, "the maximum cyclomatic complexity", "", Count, &[]),
    m("MaxCyclomaticModified", Code, "the maximum modified cyclomatic complexity", "", Count, &[]),
    m("MaxCyclomaticStrict", Code, "the maximum strict cyclomatic complexity", "", Count, &[]),
    m("RatioCommentToCode", Code, "the comment to code ratio", "", Ratio, &[]),
    m("SumCyclomatic", Code, "the total cyclomatic complexity", "", Count, &[]),
    m("SumCyclomaticModified", Code, "the total modified cyclomatic complexity", "", Count, &[]),
    m("SumCyclomaticStrict", Code, "the total strict cyclomatic complexity", "", Count, &[]),
    m("SumEssential", Code, "the total essential complexity", "", Count, &[]),
    m("CountClassBase", ClassLevel, "the number of base classes", "classes", Count, &[]),
    m("CountClassCoupled", ClassLevel, "the number of coupled classes", "classes", Count, &[]),
    m("CountClassDerived", ClassLevel, "the number of derived classes", "classes", Count, &[]),
    m("MaxInheritanceTree", ClassLevel, "the depth of the inheritance tree", "levels", Count, &[]),
    m("PercentLackOfCohesion", ClassLevel, "the percentage lack of cohesion", "percent", Count, &[]),
    m("CountInput_Min", MethodLevel, "the minimum number of input variables", "variables", Count, &["InputMin"]),
    m("CountInput_Mean", MethodLevel, "the average number of input variables", "variables", Count, &["InputMean"]),
    m("CountInput_Max", MethodLevel, "the maximum number of input variables", "variables", Count, &["InputMax"]),
    m("CountOutput_Min", MethodLevel, "the minimum number of output variables", "variables", Count, &["OutputMin"]),
    m("CountOutput_Mean", MethodLevel, "the average number of output variables", "variables", Count, &["OutputMean"]),
    m("CountOutput_Max", MethodLevel, "the maximum number of output variables", "variables", Count, &["OutputMax"]),
    m("CountPath_Min", MethodLevel, "the minimum number of execution paths", "paths", Count, &["PathMin"]),
    m("CountPath_Mean", MethodLevel, "the average number of execution paths", "paths", Count, &["PathMean"]),
    m("CountPath_Max", MethodLevel, "the maximum number of execution paths", "paths", Count, &["PathMax"]),
    m("MaxNesting_Min", MethodLevel, "the minimum nesting depth", "levels", Count, &["NestingMin"]),
    m("MaxNesting_Mean", MethodLevel, "the average nesting depth", "levels", Count, &["NestingMean"]),
    m("MaxNesting_Max", MethodLevel, "the maximum nesting depth", "levels", Count, &["NestingMax"]),
    m("COMM", Process, "the number of commits", "commits", Count, &["Commit"]),
    m("ADDED_LINES", Process, "the normalized number of added lines", "", Ratio, &["AddedLines"]),
    m("DEL_LINES", Process, "the normalized number of deleted lines", "", Ratio, &["DeletedLines"]),
    m("ADEV", Process, "the number of active developers", "developers", Count, &["ActiveDeveloper"]),
    m("DDEV", Process, "the number of distinct developers", "developers", Count, &["DistinctDeveloper"]),
    m("MINOR_COMMIT", Ownership, "the number of minor developers", "developers", Count, &["MinorCommit"]),
    m("MINOR_LINE", Ownership, "the number of minor line contributors", "developers", Count, &["MinorLine"]),
    m("MAJOR_COMMIT", Ownership, "the number of major developers", "developers", Count, &["MajorCommit"]),
    m("MAJOR_LINE", Ownership, "the number of major line contributors", "developers", Count, &["MajorLine"]),
    m("OWN_COMMIT", Ownership, "the commit ownership proportion", "", Ratio, &["OwnCommit"]),
    m("OWN_LINE", Ownership, "the ownership code proportion", "", Ratio, &["Ownership", "OwnLine"]),
];

/// Looks a metric up by canonical name or alias.
pub fn lookup(name: &str) -> Option<&'static MetricInfo> {
    STUDIED_METRICS.iter().find(|info| info.name == name || info.aliases.contains(&name))
}

/// Canonical metric name for an alias (or the name itself).
pub fn canonical_name(name: &str) -> Option<&'static str> {
    lookup(name).map(|info| info.name)
}

/// Rendering vocabulary for any feature; unknown features fall back to their name.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub phrase: String,
    pub unit: String,
    pub kind: ValueKind,
}

pub fn vocabulary(name: &str) -> Vocabulary {
    match lookup(name) {
        Some(info) => Vocabulary { phrase: info.phrase.to_string(), unit: info.unit.to_string(), kind: info.kind },
        None => Vocabulary { phrase: format!("the value of {name}"), unit: String::new(), kind: ValueKind::Ratio },
    }
}
