"""Where does thinking-mode accuracy go at a tight budget?

Walks the closed-form diagnostics on the 8B GSM8K reference numbers:
predicted accuracy, the crossover fraction, the two-source split of the tax,
and how much of it a dedicated extraction pass could buy back.

    python3 demos/01_coupling_tax.py
"""

from thinktax import diagnostics as dx
from thinktax.presets import GSM8K_8B_ALPHA_C, GSM8K_8B_ALPHA_T, GSM8K_8B_NOTHINK, gsm8k_8b_sweep_curve

curve = gsm8k_8b_sweep_curve()
acc_nt = GSM8K_8B_NOTHINK[512]

print("budget   F_L    predicted think accuracy")
for b in (256, 512, 1024, 2048, 4096):
    p = dx.DecompositionParams(float(curve.cdf_at(b)), GSM8K_8B_ALPHA_C, GSM8K_8B_ALPHA_T)
    print(f"{b:>6}  {p.f_l:5.3f}  {dx.predict_coupled_accuracy(p):6.1%}")

# Thinking only pays once this share of chains finishes inside the budget.
cf = dx.crossover_fraction(acc_nt, GSM8K_8B_ALPHA_C, GSM8K_8B_ALPHA_T)
print(f"\nthinking breaks even when F_L >= {cf.value:.3f}")

rep = dx.crossover_budget(curve, acc_nt, GSM8K_8B_ALPHA_C, GSM8K_8B_ALPHA_T, b_sat=512)
print(f"crossover budget {rep.b_star} tokens, {rep.gamma:.1f}x the nothink saturation budget")

split = dx.two_source_decomposition(dx.DecompositionParams(float(curve.cdf_at(512)), GSM8K_8B_ALPHA_C, GSM8K_8B_ALPHA_T, acc_nt))
print(f"\nat 512 tokens the tax is {split.tax:.1f} pp:")
print(f"  truncation loss  {split.truncation_loss:6.1f} pp (answers never emitted)")
print(f"  reasoning regret {split.reasoning_regret:6.1f} pp (completed chains vs nothink)")

# Extraction from truncated traces recovers part of the truncation loss.
print(f"\nrecoverable with extraction: {dx.recoverable_tax(0.32, 0.688, 0.375):.1f} pp")
