"""Two-level morphology: spelling-rule compiler and bidirectional runtime.

Spelling rules and affix combinations are composed at compile time into
indexed spelling patterns while the lexicon stays independent; words are
analysed into (root, affixes, category) and generated from them at run time.
"""

from .description import (
    Description,
    DescriptionError,
    Diagnostic,
    parse_description,
    print_description,
    validate_description,
)
from .features import (
    CompiledCategory,
    FeatureSpace,
    build_space,
    compile_constraints,
    unify,
    unify_categories,
)
from .patterns import (
    CompiledDescription,
    CompileError,
    PatternSet,
    SpellingPattern,
    compile_patterns,
    dumps,
    loads,
    template_sizes,
)
from .runtime import (
    Analysis,
    AnalysisCache,
    Analyzer,
    InMemoryLexicon,
    LexiconProvider,
    UnknownRootError,
    analyze,
    generate,
    inflections,
)
from .spelling import (
    Partition,
    Partitioning,
    RuleSet,
    SpellVerdict,
    analyze_direct,
    analyze_trace,
    check_partitioning,
    compile_rules,
    generate_direct,
    generate_trace,
    licenses,
)

__version__ = "0.1.0"

__all__ = [
    "Analysis",
    "AnalysisCache",
    "Analyzer",
    "CompileError",
    "CompiledCategory",
    "CompiledDescription",
    "Description",
    "DescriptionError",
    "Diagnostic",
    "FeatureSpace",
    "InMemoryLexicon",
    "LexiconProvider",
    "Partition",
    "Partitioning",
    "PatternSet",
    "RuleSet",
    "SpellVerdict",
    "SpellingPattern",
    "UnknownRootError",
    "analyze",
    "analyze_direct",
    "analyze_trace",
    "build_space",
    "check_partitioning",
    "compile_constraints",
    "compile_patterns",
    "compile_rules",
    "dumps",
    "generate",
    "generate_direct",
    "generate_trace",
    "inflections",
    "licenses",
    "loads",
    "parse_description",
    "print_description",
    "template_sizes",
    "unify",
    "unify_categories",
    "validate_description",
]
