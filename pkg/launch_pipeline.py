#!/usr/bin/env python3
"""
🚀 VOCAB SNIPER PIPELINE LAUNCHER
Runs every stage in order on one config file
"""

import os
import subprocess
import sys

STAGES = ['align', 'lexicon', 'phrases', 'stats', 'train', 'decode']


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    config = argv[0] if argv else os.path.join('data', 'toy.conf')
    extra = argv[1:]

    print(f"""
🎯 VOCAB SNIPER PIPELINE
━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
📚 align → lexicon → phrases
📊 coverage statistics
🧠 train → decode
━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━
Config: {config}
""")

    if not os.path.exists(config):
        print(f"❌ Config file not found: {config}")
        return 2

    script = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'vocab_sniper.py')
    for stage in STAGES:
        print(f"\n🚀 Stage {stage}...")
        try:
            subprocess.run([sys.executable, script, stage, '--config', config, *extra], check=True)
        except KeyboardInterrupt:
            print("\n🛑 Pipeline stopped by user")
            return 1
        except subprocess.CalledProcessError as e:
            print(f"❌ Stage {stage} failed with exit code {e.returncode}")
            return e.returncode

    print("\n🎉 Pipeline finished")
    return 0


if __name__ == "__main__":
    sys.exit(main())
