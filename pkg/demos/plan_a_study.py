"""Planning an abstraction study with a surrogate.

Suppose a registry has 100,000 records, roughly 10% of which are true
cases, and a billing code flags cases with sensitivity 0.40 and
specificity 0.95. This script asks how much a surrogate-guided sample
enriches cases compared with a simple random sample of the same size.

    python3 demos/plan_a_study.py
"""

from sgsdesign.design import (
    DesignSpec,
    PopulationSpec,
    SurrogateSpec,
    expected_cases,
    likelihood_ratios,
    o_ratio_exact,
    p_z,
    sampling_probabilities,
    srs_equivalent_size,
)

pop = PopulationSpec(prevalence=0.10, cohort_size=100_000)
code = SurrogateSpec(sensitivity=0.40, specificity=0.95)

lr_plus, lr_minus = likelihood_ratios(code)
print(f"P(Z=1) = {p_z(pop, code):.4f}, LR+ = {lr_plus:.2f}, LR- = {lr_minus:.4f}")

# The case/control odds of the sample, relative to SRS, for a few ratios
for R in (0.25, 0.5, 0.75):
    print(f"R = {R:.2f}: O_ratio = {o_ratio_exact(pop, code, R):.3f}")

budget = 500
design = DesignSpec("SGS", budget, 0.75)
cases = expected_cases(design, pop, code)
pi1, pi0 = sampling_probabilities(design, p_z(pop, code), pop.cohort_size)
print(f"\n{design.label} with n = {budget}: about {cases:.1f} cases expected")
print(f"selection probabilities: Z=1 {pi1:.4f}, Z=0 {pi0:.5f}")
print(f"an SRS would need n = {srs_equivalent_size(cases, pop):.0f} for the same yield")
