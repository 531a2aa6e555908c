"""Style-transfer driven domain adaptation and person re-identification toolkit.

Subpackages:
    tensor_ops      NCHW kernels with forward and vector-Jacobian products
    images          PPM/PNG ingestion, bilinear resize, pixel normalization
    network         VGG-16 shaped network, weight files, descriptors, fine-tuning
    style_transfer  content/style/total losses and the image-space optimizer
    evaluation      descriptor distances, CMC curves, mAP, report rendering
    manifest        dataset manifests and flat key=value job configuration
    figures         matplotlib renderings of reports and loss traces
    cli             the nstreid command line front end
"""

__version__ = "0.1.0"
