"""Integration tests for covert-uav."""