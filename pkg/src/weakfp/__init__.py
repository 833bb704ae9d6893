"""Learn Fokker-Planck models from particle snapshots."""
