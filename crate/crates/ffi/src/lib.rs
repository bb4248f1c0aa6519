// placeholder until the C surface lands
