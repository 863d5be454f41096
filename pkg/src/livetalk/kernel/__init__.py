from .bootstrap import KERNEL_FILES, bootstrap, boot, HostedPolicy, install_method_source

__all__ = ["KERNEL_FILES", "bootstrap", "boot", "HostedPolicy", "install_method_source"]
