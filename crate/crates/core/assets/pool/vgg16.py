def make_vgg_stage(in_ch, out_ch, convs):
    layers = []
    for i in range(convs):
        layers += [nn.Conv2d(in_ch if i == 0 else out_ch, out_ch, 3, padding=1), nn.ReLU(inplace=True)]
    layers.append(nn.MaxPool2d(2, 2))
    return nn.Sequential(*layers)


vgg16_features = nn.Sequential(
    make_vgg_stage(3, 64, 2), make_vgg_stage(64, 128, 2), make_vgg_stage(128, 256, 3),
    make_vgg_stage(256, 512, 3), make_vgg_stage(512, 512, 3),
)
