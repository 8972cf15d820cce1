#!/usr/bin/env python3
"""
Vocab Sniper - System Test
Checks the library stack and runs a miniature pipeline end to end
"""

import os
import sys
import tempfile

sys.path.append(os.path.dirname(os.path.abspath(__file__)))


def test_imports():
    """Test all critical imports"""
    try:
        print("🔍 Testing imports...")

        import numpy as np
        import pandas as pd
        import scipy
        print("✅ Core libraries: numpy, pandas, scipy")

        import joblib
        import psutil
        print("✅ Persistence and process libraries: joblib, psutil")

        import dotenv
        import pydantic
        import pydantic_settings
        import pythonjsonlogger
        print("✅ Configuration and logging: python-dotenv, pydantic-settings, python-json-logger")

        import nltk.translate.bleu_score
        print("✅ BLEU scoring (nltk)")

        from utils.pipeline import COMMANDS
        print(f"✅ Pipeline stages: {', '.join(sorted(COMMANDS))}")

        return True

    except Exception as e:
        print(f"❌ Import error: {e}")
        return False


def test_pipeline_smoke():
    """Run toy → align → lexicon → phrases → train → decode on a tiny copy task"""
    try:
        print("\n🧠 Testing pipeline...")

        from utils.pipeline import cmd_align, cmd_decode, cmd_lexicon, cmd_phrases, cmd_toy, cmd_train
        from utils.pipeline_config import PipelineConfig

        with tempfile.TemporaryDirectory() as work:
            config = PipelineConfig(
                work_dir=work, log_dir=os.path.join(work, 'logs'),
                train_src=os.path.join(work, 'toy.src'), train_tgt=os.path.join(work, 'toy.tgt'),
                test_src=os.path.join(work, 'toy.test.src'), test_tgt=os.path.join(work, 'toy.test.tgt'),
                toy_pairs=12, toy_test_pairs=3, em_iters=2, d_emb=8, d_h=8, d_s=8, d_o=8, d_att=8,
                epochs=1, batch_size=6, beam=2, decode_max_len=10,
            )
            cmd_toy(config)
            cmd_align(config)
            print("✅ Alignment")
            cmd_lexicon(config)
            cmd_phrases(config)
            print("✅ Dictionary and phrase library")
            cmd_train(config)
            print("✅ Training")
            result = cmd_decode(config)
            print(f"✅ Decoding (BLEU {result.bleu.score:.2f})")

        return True

    except Exception as e:
        print(f"❌ Pipeline error: {e}")
        return False


def test_environment():
    """Test environment setup"""
    try:
        print("\n🔧 Testing environment...")

        if os.path.exists('.env'):
            print("✅ Environment file (.env) exists")
        else:
            print("⚠️  Environment file (.env) not found - create from .env.example")

        if os.path.exists(os.path.join('data', 'toy.conf')):
            print("✅ Bundled toy corpus config found")
        else:
            print("⚠️  data/toy.conf not found")

        print(f"✅ Python version: {sys.version}")

        return True

    except Exception as e:
        print(f"❌ Environment error: {e}")
        return False


def main():
    """Run all tests"""
    print("🚀 VOCAB SNIPER - SYSTEM TEST")
    print("=" * 50)

    tests = [
        ("Import Test", test_imports),
        ("Pipeline Smoke Test", test_pipeline_smoke),
        ("Environment Test", test_environment),
    ]

    results = []
    for test_name, test_func in tests:
        print(f"\n📋 Running {test_name}...")
        try:
            result = test_func()
            results.append((test_name, result))
        except Exception as e:
            print(f"❌ {test_name} failed: {e}")
            results.append((test_name, False))

    print("\n" + "=" * 50)
    print("📊 TEST SUMMARY")
    print("=" * 50)

    passed = 0
    for test_name, result in results:
        status = "✅ PASSED" if result else "❌ FAILED"
        print(f"{test_name}: {status}")
        if result:
            passed += 1

    print(f"\nOverall: {passed}/{len(results)} tests passed")

    if passed == len(results):
        print("🎉 ALL SYSTEMS GO! Pipeline is ready")
        return 0
    else:
        print("⚠️  Some issues detected. Please review the errors above.")
        return 1


if __name__ == "__main__":
    sys.exit(main())
