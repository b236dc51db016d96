# Sequence-model experiment runner
