"""Label inventory of the MLEE corpus: categories, abbreviations, reference counts."""

# trigger type -> (category, abbreviation, display name, train count, test count)
TRIGGERS = {
    "Cell_proliferation": ("Anatomical", "CELLP", "Cell Proliferation", 82, 43),
    "Development": ("Anatomical", "DEV", "Development", 202, 98),
    "Blood_vessel_development": ("Anatomical", "BVD", "Blood Vessel Development", 540, 305),
    "Death": ("Anatomical", "DTH", "Death", 57, 36),
    "Breakdown": ("Anatomical", "BRK", "Breakdown", 44, 23),
    "Remodeling": ("Anatomical", "REMDL", "Remodeling", 22, 10),
    "Growth": ("Anatomical", "GRO", "Growth", 107, 56),
    "Synthesis": ("Molecular", "SYN", "Synthesis", 13, 4),
    "Gene_expression": ("Molecular", "GENEXP", "Gene Expression", 210, 132),
    "Transcription": ("Molecular", "TRANS", "Transcription", 16, 7),
    "Catabolism": ("Molecular", "CATA", "Catabolism", 20, 4),
    "Phosphorylation": ("Molecular", "PHO", "Phosphorylation", 26, 3),
    "Dephosphorylation": ("Molecular", "DEPHO", "Dephosphorylation", 2, 1),
    "Localization": ("General", "LOC", "Localization", 282, 133),
    "Binding": ("General", "BIND", "Binding", 102, 56),
    "Regulation": ("General", "REG", "Regulation", 362, 178),
    "Positive_regulation": ("General", "PREG", "Positive Regulation", 654, 312),
    "Negative_regulation": ("General", "NREG", "Negative Regulation", 450, 233),
    "Planned_process": ("Planned", "PLP", "Planned Process", 407, 175),
}

# entity type -> (group, display name, train count, test count)
ENTITIES = {
    "Drug_or_compound": ("Molecule", "Drug or Compound", 637, 307),
    "Gene_or_gene_product": ("Molecule", "Gene or Gene Product", 1961, 1001),
    "Organism_subdivision": ("Anatomy", "Organism Subdivision", 27, 22),
    "Anatomical_system": ("Anatomy", "Anatomical System", 10, 8),
    "Organ": ("Anatomy", "Organ", 123, 53),
    "Multi-tissue_structure": ("Anatomy", "Multi-tissue Structure", 348, 166),
    "Tissue": ("Anatomy", "Tissue", 304, 122),
    "Cell": ("Anatomy", "Cell", 866, 332),
    "Cellular_component": ("Anatomy", "Cellular Component", 105, 40),
    "Developing_anatomical_structure": ("Anatomy", "Developing Anatomical Structure", 4, 2),
    "Organism_substance": ("Anatomy", "Organism Substance", 82, 60),
    "Immaterial_anatomical_entity": ("Anatomy", "Immaterial Anatomical Entity", 11, 4),
    "Pathological_formation": ("Anatomy", "Pathological Formation", 553, 357),
    "Organism": ("Organism", "Organism", 485, 237),
}

CATEGORIES = ("Anatomical", "Molecular", "General", "Planned")
CATEGORY_MAP = {label: row[0] for label, row in TRIGGERS.items()}
ABBREVIATIONS = {label: row[1] for label, row in TRIGGERS.items()}
TEST_COUNTS = {label: row[4] for label, row in TRIGGERS.items()}

# published scores, percent
PUBLISHED_GRU = (79.78, 78.45, 79.11)
PUBLISHED_LSTM = (78.58, 78.84, 78.71)
PUBLISHED_CATEGORIES = {
    "Anatomical": (88.86, 83.06, 85.87),
    "Molecular": (88.80, 73.51, 80.43),
    "General": (75.69, 78.53, 77.09),
    "Planned": (67.63, 67.24, 67.43),
    "Overall": (79.78, 78.45, 79.11),
}
PUBLISHED_ABLATION = {
    ("word_only", "g_only"): 76.52,
    ("word_only", "l_plus_g"): 77.59,
    ("word_plus_entity", "g_only"): 78.70,
    ("word_plus_entity", "l_plus_g"): 79.11,
}


def display_name(label):
    if label in TRIGGERS:
        return TRIGGERS[label][2]
    if label in ENTITIES:
        return ENTITIES[label][1]
    return label.replace("_", " ")
