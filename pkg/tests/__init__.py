"""
Тесты для проекта RewriteNet
Test suite for RewriteNet
"""
